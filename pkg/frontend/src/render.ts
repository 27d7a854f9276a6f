/**
 * Pure HTML rendering of a composer state. No DOM access here: the caller
 * assigns the returned markup, which keeps this testable outside a browser.
 * Every visible string is either an API response field or the user's draft.
 */

import { ComposerState } from './composer';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function renderStatus(state: ComposerState): string {
  const { kind, message } = state.status;
  const banner = kind === 'unreachable'
    ? '<button data-action="retry">retry</button>'
    : '';
  return `<div class="status status-${kind}" role="status">` +
    `${escapeHtml(message)}${banner}</div>`;
}

function renderChips(state: ComposerState): string {
  if (state.sessionId === null) return '';
  const chips = state.anchors.map((name, i) => {
    const left = i > 0
      ? `<button data-action="move-anchor" data-from="${i}" data-to="${i - 1}" title="move earlier">&larr;</button>`
      : '';
    return `<span class="chip" data-anchor="${escapeHtml(name)}">${left}` +
      `${escapeHtml(name)}<button data-action="remove-anchor" ` +
      `data-anchor="${escapeHtml(name)}" title="remove">&times;</button></span>`;
  });
  const origin = state.anchorsPredicted ? ' (predicted)' : '';
  return `<div class="chips"><span class="chips-label">anchors${origin}:</span>` +
    `${chips.join('')}</div>`;
}

function renderSuggestion(state: ComposerState): string {
  const s = state.suggestion;
  if (state.sessionId === null || state.finalized) return '';
  if (s === null) return '<div class="suggestion suggestion-empty">(no suggestion yet)</div>';
  if (s.sentence === null) {
    return `<div class="suggestion suggestion-miss">no template found for ` +
      `<b>${escapeHtml(s.anchor)}</b></div>`;
  }
  const prefix = state.draft;
  let body: string;
  if (prefix && s.sentence.startsWith(prefix)) {
    body = `<mark>${escapeHtml(prefix)}</mark>` +
      escapeHtml(s.sentence.slice(prefix.length));
  } else {
    body = escapeHtml(s.sentence);
  }
  const provenance = `template #${s.template_id}: ${s.template ?? ''} ` +
    `(score ${(s.score ?? 0).toFixed(3)}${s.edited ? ', edited' : ', verbatim'})`;
  return `<div class="suggestion" title="${escapeHtml(provenance)}">` +
    `<span class="suggestion-anchor">${escapeHtml(s.anchor)}</span> ` +
    `<span class="suggestion-text">${body}</span> ` +
    `<button data-action="accept">accept</button></div>`;
}

function renderAccepted(state: ComposerState): string {
  if (state.sessionId === null) return '';
  const items = state.sentences
    .map((s) => `<li class="accepted-sentence">${escapeHtml(s)}</li>`)
    .join('');
  return `<ol class="accepted">${items}</ol>`;
}

function renderReport(state: ComposerState): string {
  if (!state.finalized || state.report === null) return '';
  const metrics = state.metrics
    ? `<dl class="metrics">${Object.entries(state.metrics)
        .map(([k, v]) => `<dt>${escapeHtml(k)}</dt><dd>${v.toFixed(4)}</dd>`)
        .join('')}</dl>`
    : '';
  return `<div class="report-view"><pre class="report">${escapeHtml(state.report)}</pre>` +
    `${metrics}<button data-action="copy">copy</button>` +
    `<button data-action="download">download</button></div>`;
}

export function renderComposer(state: ComposerState): string {
  return [
    renderStatus(state),
    renderChips(state),
    renderAccepted(state),
    renderSuggestion(state),
    renderReport(state),
  ].join('\n');
}
