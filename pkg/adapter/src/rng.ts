/**
 * Deterministic, platform-independent random numbers keyed by strings.
 *
 * xmur3 seeds sfc32 from an arbitrary key; every stream derived from the
 * same key yields the same sequence on every run, which is what makes
 * adapter responses reproducible for a fixed --seed.
 */

function xmur3(str: string): () => number {
  let h = 1779033703 ^ str.length;
  for (let i = 0; i < str.length; i++) {
    h = Math.imul(h ^ str.charCodeAt(i), 3432918353);
    h = (h << 13) | (h >>> 19);
  }
  return () => {
    h = Math.imul(h ^ (h >>> 16), 2246822507);
    h = Math.imul(h ^ (h >>> 13), 3266489909);
    return (h ^= h >>> 16) >>> 0;
  };
}

function sfc32(a: number, b: number, c: number, d: number): () => number {
  return () => {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0;
    let t = (a + b) | 0;
    a = b ^ (b >>> 9);
    b = (c + (c << 3)) | 0;
    c = (c << 21) | (c >>> 11);
    d = (d + 1) | 0;
    t = (t + d) | 0;
    c = (c + t) | 0;
    return (t >>> 0) / 4294967296;
  };
}

export class Rng {
  private next: () => number;

  constructor(key: string) {
    const seed = xmur3(key);
    this.next = sfc32(seed(), seed(), seed(), seed());
    // discard the warm-up values sfc32 needs to decorrelate from the seed
    for (let i = 0; i < 12; i++) this.next();
  }

  uniform(): number {
    return this.next();
  }

  /** Standard normal via Box-Muller (two uniforms per draw, no caching). */
  normal(mean = 0, sigma = 1): number {
    let u = 0;
    while (u === 0) u = this.next();
    const v = this.next();
    const z = Math.sqrt(-2.0 * Math.log(u)) * Math.cos(2.0 * Math.PI * v);
    return mean + sigma * z;
  }
}
