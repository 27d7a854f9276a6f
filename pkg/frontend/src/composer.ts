/**
 * Session controller for the report composer.
 *
 * Holds the single source of truth for the screen: everything shown to the
 * user comes from API responses plus the not-yet-sent draft text. Mutations
 * (accept, finalize) are serialized through a promise queue so two clicks
 * can never interleave requests; a stale-revision response refreshes state
 * from the server and asks the user to retry.
 */

import {
  ApiError,
  ClaraClient,
  CreateSessionRequest,
  SuggestMode,
  Suggestion,
} from './api';
import { debounce, Debounced } from './debounce';

export type StatusKind =
  | 'idle'
  | 'busy'
  | 'error'
  | 'conflict'
  | 'expired'
  | 'unreachable'
  | 'finalized';

export interface ComposerState {
  sessionId: string | null;
  modality: string | null;
  /** Anchor chips in the user's chosen order; drives the suggest rotation. */
  anchors: string[];
  anchorsPredicted: boolean;
  /** Prefix text typed into the draft box; not yet sent anywhere. */
  draft: string;
  suggestion: Suggestion | null;
  /** Accepted sentences, exactly as returned by the server. */
  sentences: string[];
  step: number;
  revision: number;
  finalized: boolean;
  report: string | null;
  metrics: Record<string, number> | null;
  status: { kind: StatusKind; message: string };
}

export interface ComposerOptions {
  debounceMs?: number;
  mode?: SuggestMode;
  onChange?: (state: ComposerState) => void;
}

function initialState(): ComposerState {
  return {
    sessionId: null,
    modality: null,
    anchors: [],
    anchorsPredicted: false,
    draft: '',
    suggestion: null,
    sentences: [],
    step: 0,
    revision: 0,
    finalized: false,
    report: null,
    metrics: null,
    status: { kind: 'idle', message: 'no active session' },
  };
}

export class Composer {
  readonly state: ComposerState = initialState();

  private readonly client: ClaraClient;
  private readonly mode: SuggestMode;
  private readonly onChange?: (state: ComposerState) => void;
  private readonly scheduleSuggest: Debounced<[]>;

  private queue: Promise<void> = Promise.resolve();
  private inflightSuggest: Promise<void> = Promise.resolve();
  private suggestSeq = 0;
  private anchorsEdited = false;

  constructor(client: ClaraClient, options: ComposerOptions = {}) {
    this.client = client;
    this.mode = options.mode ?? 'full';
    this.onChange = options.onChange;
    this.scheduleSuggest = debounce(() => {
      this.inflightSuggest = this.suggestNow();
    }, options.debounceMs ?? 300);
  }

  private emit(): void {
    this.onChange?.(this.state);
  }

  private setStatus(kind: StatusKind, message: string): void {
    this.state.status = { kind, message };
    this.emit();
  }

  /** Map a request failure onto the status line. */
  private fail(err: unknown, context: string): void {
    if (err instanceof ApiError) {
      if (err.status === 404) {
        this.setStatus('expired', 'session no longer exists on the server');
      } else if (err.status === 409) {
        this.setStatus('conflict', `${err.detail}; state refreshed, please retry`);
      } else {
        this.setStatus('error', `${context}: ${err.detail}`);
      }
    } else {
      this.setStatus('unreachable', `service unreachable (${context})`);
    }
  }

  /** Serialize a mutation behind every previously queued one. */
  private enqueue(run: () => Promise<void>): Promise<void> {
    const next = this.queue.then(run, run);
    this.queue = next.catch(() => undefined);
    return next;
  }

  /** Settle all in-flight work; test hook and shutdown aid. */
  async settle(): Promise<void> {
    await this.queue;
    await this.inflightSuggest;
  }

  async start(input: CreateSessionRequest): Promise<void> {
    Object.assign(this.state, initialState());
    this.setStatus('busy', 'starting session');
    try {
      const created = await this.client.createSession(input);
      this.state.sessionId = created.session_id;
      this.state.modality = created.modality;
      this.state.anchors = [...created.anchors];
      this.state.anchorsPredicted = created.anchors_predicted;
      this.state.revision = created.revision;
      this.anchorsEdited = false;
      this.setStatus('idle', `session ${created.session_id} started`);
    } catch (err) {
      this.state.sessionId = null;
      this.fail(err, 'could not start session');
    }
  }

  /** Record prefix text; a suggestion request follows after the idle gap. */
  setDraft(text: string): void {
    if (this.state.sessionId === null || this.state.finalized) return;
    this.state.draft = text;
    this.emit();
    this.scheduleSuggest();
  }

  /** The anchor the next sentence should be steered by, in chip order. */
  nextAnchor(): string | null {
    const { anchors, step } = this.state;
    if (anchors.length === 0) return null;
    return anchors[step % anchors.length];
  }

  async suggestNow(): Promise<void> {
    const { sessionId, finalized } = this.state;
    if (sessionId === null || finalized) return;
    const anchor = this.nextAnchor();
    if (anchor === null) {
      this.state.suggestion = null;
      this.setStatus('error', 'no anchors selected');
      return;
    }
    const seq = ++this.suggestSeq;
    try {
      const suggestion = await this.client.suggest(sessionId, {
        prefix: this.state.draft || undefined,
        anchor,
        mode: this.mode,
      });
      if (seq !== this.suggestSeq) return; // a newer request superseded this one
      this.state.suggestion = suggestion;
      this.setStatus('idle', suggestion.sentence === null
        ? 'no matching template for this anchor'
        : 'suggestion ready');
    } catch (err) {
      if (seq !== this.suggestSeq) return;
      this.state.suggestion = null;
      this.fail(err, 'suggest failed');
    }
  }

  removeAnchor(name: string): void {
    this.state.anchors = this.state.anchors.filter((a) => a !== name);
    this.anchorsEdited = true;
    this.emit();
  }

  addAnchor(name: string): void {
    if (!this.state.anchors.includes(name)) {
      this.state.anchors = [...this.state.anchors, name];
      this.anchorsEdited = true;
      this.emit();
    }
  }

  moveAnchor(from: number, to: number): void {
    const anchors = [...this.state.anchors];
    if (from < 0 || from >= anchors.length || to < 0 || to >= anchors.length) return;
    const [chip] = anchors.splice(from, 1);
    anchors.splice(to, 0, chip);
    this.state.anchors = anchors;
    this.anchorsEdited = true;
    this.emit();
  }

  /** Pull authoritative state from the server. */
  async refresh(): Promise<void> {
    const { sessionId } = this.state;
    if (sessionId === null) return;
    try {
      const session = await this.client.getSession(sessionId);
      this.state.sentences = [...session.sentences];
      this.state.step = session.step;
      this.state.revision = session.revision;
      this.state.finalized = session.finalized;
      if (!this.anchorsEdited) this.state.anchors = [...session.anchors];
      this.emit();
    } catch (err) {
      this.fail(err, 'refresh failed');
    }
  }

  /**
   * Commit a sentence. With no argument the current suggestion is accepted
   * verbatim; pass text to accept an edited version instead.
   */
  accept(edited?: string): Promise<void> {
    return this.enqueue(async () => {
      const { sessionId, finalized, suggestion } = this.state;
      if (sessionId === null || finalized) return;
      const sentence = (edited ?? suggestion?.sentence ?? '').trim();
      if (!sentence) {
        this.setStatus('error', 'nothing to accept');
        return;
      }
      this.scheduleSuggest.cancel();
      try {
        await this.client.accept(sessionId, sentence, this.state.revision);
        await this.refresh();
        this.state.draft = '';
        this.state.suggestion = null;
        this.setStatus('idle', `accepted sentence ${this.state.step}`);
        // the accepted sentence changes the editing context, so fetch the
        // next suggestion right away rather than waiting for typing
        this.inflightSuggest = this.suggestNow();
        await this.inflightSuggest;
      } catch (err) {
        this.fail(err, 'accept failed');
        if (err instanceof ApiError && err.status === 409) await this.refresh();
      }
    });
  }

  finalize(references?: string[]): Promise<void> {
    return this.enqueue(async () => {
      const { sessionId, finalized } = this.state;
      if (sessionId === null || finalized) return;
      this.scheduleSuggest.cancel();
      try {
        const result = await this.client.finalize(sessionId, this.state.revision, references);
        this.state.finalized = true;
        this.state.report = result.report;
        this.state.sentences = [...result.sentences];
        this.state.metrics = result.metrics ?? null;
        this.state.suggestion = null;
        this.setStatus('finalized', 'report finalized');
      } catch (err) {
        this.fail(err, 'finalize failed');
        if (err instanceof ApiError && err.status === 409) await this.refresh();
      }
    });
  }
}
