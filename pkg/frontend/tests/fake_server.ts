/**
 * In-memory stand-in for the /v1 service, faithful to its observable
 * contract: revision checks return 409, unknown sessions 404, suggestions
 * are deterministic functions of (anchor, prefix, accepted count), and the
 * suggested sentence always starts with the requested prefix.
 */

import { FetchLike, ResponseLike } from '../src/api';

interface FakeSession {
  id: string;
  modality: string;
  anchors: string[];
  anchors_predicted: boolean;
  accepted: string[];
  revision: number;
  finalized: boolean;
}

function reply(status: number, body: unknown): ResponseLike {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: () => Promise.resolve(body),
  };
}

export class FakeServer {
  sessions = new Map<string, FakeSession>();
  suggestCalls: Array<{ session: string; anchor?: string; prefix?: string }> = [];
  acceptCalls = 0;
  down = false;
  private nextId = 1;

  /** Simulate an out-of-band writer bumping the revision. */
  mutateExternally(id: string, sentence: string): void {
    const session = this.sessions.get(id);
    if (!session) throw new Error(`no session ${id}`);
    session.accepted.push(sentence);
    session.revision += 1;
  }

  sentenceFor(anchor: string, prefix: string | undefined, step: number): string {
    const head = prefix ? `${prefix}` : `the ${anchor.toLowerCase()}`;
    return `${head} finding ${step + 1} is noted .`;
  }

  fetch: FetchLike = (url, init) => {
    if (this.down) return Promise.reject(new TypeError('fetch failed'));
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(init.body) : {};
    const path = url.replace(/^https?:\/\/[^/]+/, '');

    if (method === 'GET' && path === '/v1/health') {
      return Promise.resolve(reply(200, { status: 'ok', models_loaded: true }));
    }
    if (method === 'GET' && path.startsWith('/v1/anchors')) {
      return Promise.resolve(reply(200, { modality: 'eeg', anchors: ['Normality', 'Seizure'] }));
    }

    if (method === 'POST' && path === '/v1/sessions') {
      if (!body.embedding && !body.signal_ref) {
        return Promise.resolve(reply(400, { detail: 'need embedding or signal_ref' }));
      }
      const anchors: string[] = body.anchors?.length
        ? body.anchors
        : ['Normality', 'Drowsiness'];
      const session: FakeSession = {
        id: `s${this.nextId++}`,
        modality: body.modality ?? 'eeg',
        anchors,
        anchors_predicted: !body.anchors?.length,
        accepted: [],
        revision: 0,
        finalized: false,
      };
      this.sessions.set(session.id, session);
      return Promise.resolve(reply(201, {
        session_id: session.id,
        modality: session.modality,
        anchors: session.anchors,
        anchors_predicted: session.anchors_predicted,
        revision: session.revision,
      }));
    }

    const match = path.match(/^\/v1\/sessions\/([^/]+)(?:\/(suggest|accept|finalize))?$/);
    if (!match) return Promise.resolve(reply(404, { detail: `no route ${path}` }));
    const session = this.sessions.get(match[1]);
    if (!session) return Promise.resolve(reply(404, { detail: 'unknown session' }));
    const action = match[2];

    if (method === 'GET' && !action) {
      return Promise.resolve(reply(200, {
        session_id: session.id,
        modality: session.modality,
        anchors: session.anchors,
        anchors_predicted: session.anchors_predicted,
        sentences: [...session.accepted],
        step: session.accepted.length,
        revision: session.revision,
        finalized: session.finalized,
        created_at: 't0',
        updated_at: 't1',
      }));
    }

    if (method === 'POST' && action === 'suggest') {
      this.suggestCalls.push({ session: session.id, anchor: body.anchor, prefix: body.prefix });
      const anchor = body.anchor ?? session.anchors[session.accepted.length % session.anchors.length];
      const step = session.accepted.length;
      const sentence = this.sentenceFor(anchor, body.prefix, step);
      return Promise.resolve(reply(200, {
        anchor,
        sentence,
        template_id: 100 + step,
        template: `the ${anchor.toLowerCase()} template sentence .`,
        score: 2.5,
        edited: body.mode !== 'retrieve_only',
        step,
      }));
    }

    if (method === 'POST' && action === 'accept') {
      this.acceptCalls += 1;
      if (session.finalized) return Promise.resolve(reply(409, { detail: 'session is finalized' }));
      if (body.revision !== undefined && body.revision !== session.revision) {
        return Promise.resolve(reply(409, { detail: 'stale revision' }));
      }
      const sentence = (body.sentence ?? '').trim();
      if (!sentence) return Promise.resolve(reply(400, { detail: 'sentence must be nonempty' }));
      session.accepted.push(sentence);
      session.revision += 1;
      return Promise.resolve(reply(200, {
        session_id: session.id,
        step: session.accepted.length,
        revision: session.revision,
      }));
    }

    if (method === 'POST' && action === 'finalize') {
      if (session.accepted.length === 0) {
        return Promise.resolve(reply(409, { detail: 'nothing accepted to finalize' }));
      }
      if (body.revision !== undefined && body.revision !== session.revision) {
        return Promise.resolve(reply(409, { detail: 'stale revision' }));
      }
      session.finalized = true;
      return Promise.resolve(reply(200, {
        session_id: session.id,
        report: session.accepted.join(' '),
        sentences: [...session.accepted],
        revision: session.revision,
        finalized: true,
      }));
    }

    return Promise.resolve(reply(404, { detail: `no route ${method} ${path}` }));
  };
}
