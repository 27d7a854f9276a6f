/**
 * Browser entry point: wires the composer controller to the static page in
 * index.html. The session starts from a pasted or uploaded JSON study
 * descriptor, e.g. {"embedding": [...], "anchors": ["Seizure"]}.
 */

import { ClaraClient, CreateSessionRequest } from './api';
import { Composer } from './composer';
import { renderComposer } from './render';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function parseDescriptor(text: string): CreateSessionRequest {
  const parsed: unknown = JSON.parse(text);
  if (typeof parsed !== 'object' || parsed === null || Array.isArray(parsed)) {
    throw new Error('descriptor must be a JSON object');
  }
  const body = parsed as CreateSessionRequest;
  if (!body.embedding && !body.signal_ref) {
    throw new Error('descriptor needs "embedding" or "signal_ref"');
  }
  return body;
}

export function bootstrap(): void {
  const screen = el<HTMLDivElement>('composer');
  const descriptorBox = el<HTMLTextAreaElement>('descriptor');
  const fileInput = el<HTMLInputElement>('descriptor-file');
  const startButton = el<HTMLButtonElement>('start');
  const startError = el<HTMLDivElement>('start-error');
  const draftBox = el<HTMLInputElement>('draft');
  const editBox = el<HTMLInputElement>('edited');
  const acceptEdited = el<HTMLButtonElement>('accept-edited');
  const finalizeButton = el<HTMLButtonElement>('finalize');

  const client = new ClaraClient('');
  const composer = new Composer(client, {
    onChange: (state) => {
      screen.innerHTML = renderComposer(state);
      const active = state.sessionId !== null && !state.finalized;
      draftBox.disabled = !active;
      editBox.disabled = !active;
      acceptEdited.disabled = !active;
      finalizeButton.disabled = state.sessionId === null || state.finalized
        || state.sentences.length === 0;
      if (state.suggestion?.sentence && editBox.value === '') {
        editBox.placeholder = state.suggestion.sentence;
      }
    },
  });
  let lastDescriptor: CreateSessionRequest | null = null;

  const start = async (text: string) => {
    startError.textContent = '';
    let body: CreateSessionRequest;
    try {
      body = parseDescriptor(text);
    } catch (err) {
      startError.textContent = `invalid descriptor: ${(err as Error).message}`;
      return; // no session is created
    }
    lastDescriptor = body;
    await composer.start(body);
    draftBox.value = '';
    editBox.value = '';
  };

  startButton.addEventListener('click', () => void start(descriptorBox.value));

  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    void file.text().then((text) => {
      descriptorBox.value = text;
      return start(text);
    });
  });

  draftBox.addEventListener('input', () => composer.setDraft(draftBox.value));

  acceptEdited.addEventListener('click', () => {
    const edited = editBox.value.trim();
    void composer.accept(edited || undefined).then(() => {
      draftBox.value = '';
      editBox.value = '';
    });
  });

  finalizeButton.addEventListener('click', () => void composer.finalize());

  // clicks on rendered controls (chips, accept, retry, copy, download)
  screen.addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest('[data-action]');
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === 'remove-anchor' && target.dataset.anchor) {
      composer.removeAnchor(target.dataset.anchor);
    } else if (action === 'move-anchor') {
      composer.moveAnchor(Number(target.dataset.from), Number(target.dataset.to));
    } else if (action === 'accept') {
      void composer.accept().then(() => {
        draftBox.value = '';
        editBox.value = '';
      });
    } else if (action === 'retry' && lastDescriptor) {
      void composer.start(lastDescriptor);
    } else if (action === 'copy' && composer.state.report !== null) {
      void navigator.clipboard.writeText(composer.state.report);
    } else if (action === 'download' && composer.state.report !== null) {
      const blob = new Blob([composer.state.report], { type: 'text/plain' });
      const link = document.createElement('a');
      link.href = URL.createObjectURL(blob);
      link.download = `report-${composer.state.sessionId ?? 'draft'}.txt`;
      link.click();
      URL.revokeObjectURL(link.href);
    }
  });
}

if (typeof document !== 'undefined') {
  document.addEventListener('DOMContentLoaded', bootstrap);
}
