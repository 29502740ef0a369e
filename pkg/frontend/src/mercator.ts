/** Spherical Web-Mercator helpers for laying out map features.
 *
 * Mirrors the service's tile workspace so screen geometry matches the
 * pipeline's: x = R*lon_rad, y = R*ln(tan(pi/4 + lat_rad/2)).
 */

const R = 6378137;

export interface XY {
  x: number;
  y: number;
}

export function project(lon: number, lat: number): XY {
  const x = (R * Math.PI * lon) / 180;
  const y = R * Math.log(Math.tan(Math.PI / 4 + (lat * Math.PI) / 360));
  return { x, y };
}

export function unproject(x: number, y: number): { lon: number; lat: number } {
  const lon = (x / (R * Math.PI)) * 180;
  const lat = ((2 * Math.atan(Math.exp(y / R)) - Math.PI / 2) * 180) / Math.PI;
  return { lon, lat };
}

export interface Extent {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export function extentOf(points: XY[], padFraction = 0.08): Extent | null {
  if (points.length === 0) {
    return null;
  }
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    minY = Math.min(minY, p.y);
    maxX = Math.max(maxX, p.x);
    maxY = Math.max(maxY, p.y);
  }
  const padX = Math.max(50, (maxX - minX) * padFraction);
  const padY = Math.max(50, (maxY - minY) * padFraction);
  return { minX: minX - padX, minY: minY - padY, maxX: maxX + padX, maxY: maxY + padY };
}
