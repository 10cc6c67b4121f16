import { describe, expect, it } from "vitest";

import { Viewport } from "../src/viewport.js";

describe("Viewport", () => {
  it("keeps world-to-screen invertible through pan and zoom", () => {
    const vp = new Viewport(900, 700, 4, 12.5, -30);
    // a deliberately messy interaction sequence
    vp.zoomAt({ x: 100, y: 650 }, 1.7);
    vp.panByScreen(-212.3, 57.9);
    vp.zoomAt({ x: 871, y: 3 }, 0.31);
    vp.panByScreen(4.2, -998);
    vp.zoomAt({ x: 450, y: 350 }, 2.6);
    for (const p of [
      { x: 0, y: 0 }, { x: 899, y: 699 }, { x: 123.4, y: 567.8 },
      { x: 450, y: 350 },
    ]) {
      const back = vp.toScreen(vp.toWorld(p));
      const err = Math.hypot(back.x - p.x, back.y - p.y);
      expect(err).toBeLessThan(0.5);
    }
  });

  it("zoomAt keeps the anchored world point fixed on screen", () => {
    const vp = new Viewport(800, 600, 2, 5, 5);
    const anchor = { x: 630, y: 121 };
    const before = vp.toWorld(anchor);
    vp.zoomAt(anchor, 3.0);
    const after = vp.toScreen(before);
    expect(after.x).toBeCloseTo(anchor.x, 6);
    expect(after.y).toBeCloseTo(anchor.y, 6);
  });

  it("maps north to up", () => {
    const vp = new Viewport(400, 400, 1, 0, 0);
    const origin = vp.toScreen({ x: 0, y: 0 });
    const north = vp.toScreen({ x: 0, y: 10 });
    expect(north.y).toBeLessThan(origin.y);
    expect(north.x).toBe(origin.x);
  });

  it("fitBounds contains the bounds with padding", () => {
    const vp = new Viewport(900, 700);
    vp.fitBounds(-120, -40, 300, 180, 30);
    for (const p of [
      { x: -120, y: -40 }, { x: 300, y: 180 }, { x: 90, y: 70 },
    ]) {
      const s = vp.toScreen(p);
      expect(s.x).toBeGreaterThanOrEqual(29.5);
      expect(s.x).toBeLessThanOrEqual(900 - 29.5);
      expect(s.y).toBeGreaterThanOrEqual(29.5);
      expect(s.y).toBeLessThanOrEqual(700 - 29.5);
    }
  });

  it("clamps zoom instead of collapsing the scale", () => {
    const vp = new Viewport(400, 400, 1);
    vp.zoomAt({ x: 200, y: 200 }, 1e-9);
    expect(vp.scale).toBeGreaterThan(0);
    const p = vp.toScreen(vp.toWorld({ x: 10, y: 390 }));
    expect(p.x).toBeCloseTo(10, 6);
  });
});
