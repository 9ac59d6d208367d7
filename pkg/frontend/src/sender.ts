/**
 * Debounced command sender: collapses keyboard/UI input to at most one
 * command frame per debounce interval (>= 30 Hz), tagging every frame with a
 * monotonically increasing sequence number and clamping vectors to the
 * schema bounds before they leave the client.
 */

import {
  buildCommand,
  CommandFrame,
  CommandMode,
  Mode,
  Vec6,
} from "./protocol.js";

export const MIN_SEND_HZ = 30;
export const DEFAULT_INTERVAL_MS = 1000 / MIN_SEND_HZ;

const ZERO: Vec6 = [0, 0, 0, 0, 0, 0];

function isZero(v: Vec6): boolean {
  return v.every((x) => x === 0);
}

export interface SenderOptions {
  intervalMs?: number;
  now?: () => number;
}

export class CommandSender {
  private seq = 0;
  private lastSent = -Infinity;
  private readonly intervalMs: number;
  private readonly now: () => number;
  private wasActive = false;

  constructor(
    private readonly transmit: (frame: CommandFrame) => void,
    options: SenderOptions = {},
  ) {
    const interval = options.intervalMs ?? DEFAULT_INTERVAL_MS;
    if (interval > 1000 / MIN_SEND_HZ + 1e-9) {
      throw new Error(`debounce interval must keep the rate >= ${MIN_SEND_HZ} Hz`);
    }
    this.intervalMs = interval;
    this.now = options.now ?? (() => Date.now());
  }

  get nextSeq(): number {
    return this.seq;
  }

  /**
   * Offer the current input; sends at most one frame per interval. A
   * transition to zero input sends one final zero-twist frame so the server
   * stops integrating, then goes quiet (the bridge holds the reference).
   */
  offer(mode: Mode, commandMode: CommandMode, left: Vec6, right: Vec6 = ZERO): boolean {
    const active = !isZero(left) || !isZero(right);
    const t = this.now();
    if (!active && !this.wasActive) return false;
    if (active && t - this.lastSent < this.intervalMs) return false;
    this.transmit(buildCommand(this.seq++, mode, commandMode, left, right));
    this.lastSent = t;
    this.wasActive = active;
    return true;
  }

  /** Reset the rate gate (not the sequence counter) after a reconnect. */
  resetTimer(): void {
    this.lastSent = -Infinity;
    this.wasActive = false;
  }
}
