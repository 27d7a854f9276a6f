/**
 * Typed client for the clara /v1 HTTP API.
 *
 * The fetch implementation is injectable so tests can run against an
 * in-memory server; the default is the browser's fetch.
 */

export interface ResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<ResponseLike>;

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
    this.status = status;
    this.detail = detail;
  }
}

export interface HealthInfo {
  status: string;
  models_loaded: boolean;
}

export interface AnchorVocabulary {
  modality: string;
  anchors: string[];
}

export interface RetrievedSentence {
  sentence_id: number;
  sentence: string;
  weight: number;
  score: number;
}

export interface CreateSessionRequest {
  embedding?: number[];
  signal_ref?: string;
  anchors?: string[];
  modality?: string;
}

export interface SessionCreated {
  session_id: string;
  modality: string;
  anchors: string[];
  anchors_predicted: boolean;
  revision: number;
}

export interface SessionState {
  session_id: string;
  modality: string;
  anchors: string[];
  anchors_predicted: boolean;
  sentences: string[];
  step: number;
  revision: number;
  finalized: boolean;
  created_at: string;
  updated_at: string;
}

export type SuggestMode = 'full' | 'retrieve_only';

export interface SuggestRequest {
  prefix?: string;
  anchor?: string;
  mode?: SuggestMode;
}

export interface Suggestion {
  anchor: string;
  sentence: string | null;
  template_id: number | null;
  template: string | null;
  score: number | null;
  edited: boolean;
  step: number;
  note?: string;
}

export interface AcceptResult {
  session_id: string;
  step: number;
  revision: number;
}

export interface FinalizeResult {
  session_id: string;
  report: string;
  sentences: string[];
  revision: number;
  finalized: boolean;
  metrics?: Record<string, number>;
}

export class ClaraClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl = '', fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/$/, '');
    // bind so the browser's fetch keeps its expected receiver
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await res.json().catch(() => ({}));
    if (!res.ok) {
      const detail = (payload as { detail?: unknown }).detail;
      throw new ApiError(res.status, typeof detail === 'string' ? detail : res.status.toString());
    }
    return payload as T;
  }

  health(): Promise<HealthInfo> {
    return this.request('GET', '/v1/health');
  }

  anchors(modality: string): Promise<AnchorVocabulary> {
    return this.request('GET', `/v1/anchors?modality=${encodeURIComponent(modality)}`);
  }

  retrieve(q: string, k = 5): Promise<{ query: string; results: RetrievedSentence[] }> {
    return this.request('GET', `/v1/retrieve?q=${encodeURIComponent(q)}&k=${k}`);
  }

  createSession(req: CreateSessionRequest): Promise<SessionCreated> {
    return this.request('POST', '/v1/sessions', req);
  }

  getSession(id: string): Promise<SessionState> {
    return this.request('GET', `/v1/sessions/${encodeURIComponent(id)}`);
  }

  suggest(id: string, req: SuggestRequest = {}): Promise<Suggestion> {
    return this.request('POST', `/v1/sessions/${encodeURIComponent(id)}/suggest`, req);
  }

  accept(id: string, sentence: string, revision: number): Promise<AcceptResult> {
    return this.request('POST', `/v1/sessions/${encodeURIComponent(id)}/accept`,
                        { sentence, revision });
  }

  finalize(id: string, revision: number, references?: string[]): Promise<FinalizeResult> {
    const body: { revision: number; references?: string[] } = { revision };
    if (references && references.length > 0) body.references = references;
    return this.request('POST', `/v1/sessions/${encodeURIComponent(id)}/finalize`, body);
  }
}
