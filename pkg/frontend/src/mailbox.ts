/** Latest-value mailbox: new values overwrite, never queue. The render
 *  loop can fall behind the network without frames piling up. */
export class LatestMailbox<T> {
  private value: T | null = null;
  overwrites = 0;

  put(v: T): void {
    if (this.value !== null) {
      this.overwrites++;
    }
    this.value = v;
  }

  /** Return and clear the stored value. */
  take(): T | null {
    const v = this.value;
    this.value = null;
    return v;
  }

  peek(): T | null {
    return this.value;
  }
}
