/** HUD text fields: latency, robot deviation, frame/pose rates. */

import type { SessionStats } from "./session.js";

export class Hud {
  constructor(private root: HTMLElement) {}

  update(s: SessionStats): void {
    const set = (id: string, text: string) => {
      const el = this.root.querySelector(`[data-hud="${id}"]`);
      if (el) el.textContent = text;
    };
    set("conn", s.connected ? (s.stale ? "stale" : "live") : "disconnected");
    set("latency", s.latencyMs === null ? "--" : `${s.latencyMs.toFixed(0)} ms`);
    set("ds", s.dsMeters === null ? "--" : `${(s.dsMeters * 100).toFixed(1)} cm`);
    set("fps", s.fps.toFixed(0));
    set("posehz", s.poseHz.toFixed(0));
    const lag = this.root.querySelector(`[data-hud="lagbar"]`) as HTMLElement | null;
    if (lag && s.dsMeters !== null) {
      const frac = Math.min(s.dsMeters / 0.3, 1);
      lag.style.width = `${(frac * 100).toFixed(0)}%`;
      lag.style.background = frac < 0.33 ? "#4caf50" : frac < 0.66 ? "#ff9800" : "#f44336";
    }
  }
}
