// Debounced refresh with a generation counter: rapid slider moves collapse
// into one request wave, and only the newest generation may commit, so a
// slow stale response can never paint over a newer one.

export class UpdateScheduler {
  private generation = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly debounceMs: number,
    private readonly run: (generation: number) => void,
  ) {}

  /** Request a refresh; returns the generation it will run as. */
  schedule(): number {
    const generation = ++this.generation;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.run(generation);
    }, this.debounceMs);
    return generation;
  }

  /** Fire immediately (initial load), skipping the debounce window. */
  scheduleNow(): number {
    const generation = ++this.generation;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.run(generation);
    return generation;
  }

  /** True only for the newest generation; stale fetches must not commit. */
  isCurrent(generation: number): boolean {
    return generation === this.generation;
  }
}
