/** Trailing-edge debounce: the wrapped function runs once the caller has
 *  been idle for `waitMs`. Each call resets the timer and keeps the most
 *  recent arguments. */

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  /** Drop any pending invocation. */
  cancel(): void;
  /** Run a pending invocation immediately. */
  flush(): void;
  pending(): boolean;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs = 300,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const fire = () => {
    timer = null;
    const args = lastArgs as A;
    lastArgs = null;
    fn(...args);
  };

  const wrapped = ((...args: A) => {
    lastArgs = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(fire, waitMs);
  }) as Debounced<A>;

  wrapped.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    lastArgs = null;
  };
  wrapped.flush = () => {
    if (timer !== null) {
      clearTimeout(timer);
      fire();
    }
  };
  wrapped.pending = () => timer !== null;

  return wrapped;
}
