export const MIN_POLL_INTERVAL_MS = 500;

/** Repeatedly fetch a value until `isDone`, delivering results in order.
 *
 * Each request carries a sequence number; a response whose sequence is older
 * than the newest delivered one is discarded, so a slow in-flight poll can
 * never overwrite fresher state. The interval is clamped to >= 500 ms.
 */
export class Poller<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private nextSeq = 0;
  private deliveredSeq = -1;
  private stopped = false;
  readonly intervalMs: number;

  constructor(
    private fetchOnce: () => Promise<T>,
    private onValue: (value: T) => void,
    private isDone: (value: T) => boolean,
    intervalMs: number = MIN_POLL_INTERVAL_MS,
    private onError: (err: unknown) => void = () => {},
  ) {
    this.intervalMs = Math.max(intervalMs, MIN_POLL_INTERVAL_MS);
  }

  start(): void {
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }

  /** One poll round; exposed for tests that drive time manually. */
  async tick(): Promise<void> {
    if (this.stopped) return;
    const seq = this.nextSeq++;
    let value: T;
    try {
      value = await this.fetchOnce();
    } catch (err) {
      this.onError(err);
      this.schedule();
      return;
    }
    if (this.stopped || seq < this.deliveredSeq) return;
    this.deliveredSeq = seq;
    this.onValue(value);
    if (this.isDone(value)) {
      this.stopped = true;
      return;
    }
    this.schedule();
  }

  /** Feed an out-of-band response through the stale filter (test hook). */
  accept(seq: number, value: T): boolean {
    if (this.stopped || seq < this.deliveredSeq) return false;
    this.deliveredSeq = seq;
    this.onValue(value);
    return true;
  }

  allocateSeq(): number {
    return this.nextSeq++;
  }

  private schedule(): void {
    if (this.stopped) return;
    this.timer = setTimeout(() => void this.tick(), this.intervalMs);
  }
}
