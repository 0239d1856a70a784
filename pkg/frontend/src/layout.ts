// Small force-directed layout. No dependencies: repulsion between all node
// pairs, springs along edges, a weak pull to the center, velocity damping,
// fixed iteration count. Seeded so the same graph always lands the same way.

export interface LayoutPoint {
  x: number;
  y: number;
}

export interface LayoutOptions {
  width: number;
  height: number;
  iterations?: number;
  seed?: number;
  springLength?: number;
}

interface Body extends LayoutPoint {
  id: string;
  vx: number;
  vy: number;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function forceLayout(
  nodeIds: string[],
  edges: { sourceId: string; targetId: string }[],
  options: LayoutOptions,
): Map<string, LayoutPoint> {
  const width = options.width;
  const height = options.height;
  const iterations = options.iterations ?? 300;
  const springLength = options.springLength ?? Math.min(width, height) / 4;
  const rand = mulberry32(options.seed ?? 42);

  const bodies: Body[] = nodeIds.map((id) => ({
    id,
    x: width / 2 + (rand() - 0.5) * width * 0.6,
    y: height / 2 + (rand() - 0.5) * height * 0.6,
    vx: 0,
    vy: 0,
  }));
  const index = new Map(bodies.map((b) => [b.id, b]));
  const springs = edges
    .map((e) => [index.get(e.sourceId), index.get(e.targetId)] as const)
    .filter((pair): pair is readonly [Body, Body] => !!pair[0] && !!pair[1]);

  const repulsion = springLength * springLength;
  const damping = 0.85;
  let temperature = Math.min(width, height) / 10;

  for (let step = 0; step < iterations; step++) {
    for (let i = 0; i < bodies.length; i++) {
      for (let j = i + 1; j < bodies.length; j++) {
        const a = bodies[i];
        const b = bodies[j];
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let d2 = dx * dx + dy * dy;
        if (d2 < 0.01) {
          // coincident points: nudge apart deterministically
          dx = (rand() - 0.5) * 0.1;
          dy = (rand() - 0.5) * 0.1;
          d2 = dx * dx + dy * dy;
        }
        const force = repulsion / d2;
        const d = Math.sqrt(d2);
        const fx = (dx / d) * force;
        const fy = (dy / d) * force;
        a.vx += fx;
        a.vy += fy;
        b.vx -= fx;
        b.vy -= fy;
      }
    }
    for (const [a, b] of springs) {
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const d = Math.max(Math.sqrt(dx * dx + dy * dy), 0.1);
      const stretch = (d - springLength) * 0.05;
      const fx = (dx / d) * stretch;
      const fy = (dy / d) * stretch;
      a.vx += fx;
      a.vy += fy;
      b.vx -= fx;
      b.vy -= fy;
    }
    for (const body of bodies) {
      body.vx += (width / 2 - body.x) * 0.005;
      body.vy += (height / 2 - body.y) * 0.005;
      const speed = Math.sqrt(body.vx * body.vx + body.vy * body.vy);
      if (speed > temperature) {
        body.vx = (body.vx / speed) * temperature;
        body.vy = (body.vy / speed) * temperature;
      }
      body.x += body.vx;
      body.y += body.vy;
      body.vx *= damping;
      body.vy *= damping;
    }
    temperature *= 0.99;
  }

  const margin = 24;
  const result = new Map<string, LayoutPoint>();
  for (const body of bodies) {
    result.set(body.id, {
      x: clamp(body.x, margin, width - margin),
      y: clamp(body.y, margin, height - margin),
    });
  }
  return result;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}
