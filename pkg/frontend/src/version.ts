/**
 * Monotone version guard: responses older than the newest version seen are
 * dropped, so racing fetches can never paint a stale map over a fresh one.
 */
export class VersionGate {
  private latest = -Infinity;

  get current(): number {
    return this.latest;
  }

  /** Record an authoritative version (mutation responses). */
  bump(version: number): void {
    if (version > this.latest) this.latest = version;
  }

  /** True when a payload at this version may be applied; bumps on accept. */
  accept(version: number): boolean {
    if (version < this.latest) return false;
    this.latest = version;
    return true;
  }

  reset(): void {
    this.latest = -Infinity;
  }
}
