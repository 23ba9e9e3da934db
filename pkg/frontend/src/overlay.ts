/** Compositing of the shadow guidance beneath the user's ink.
 *
 * Service rasters are ink-on-black; the page shows them as dark strokes on
 * white paper. The shadow sits underneath as light grey and user ink always
 * wins where both are present.
 */

import type { GreyRaster } from "./pgm.js";

export interface OverlayOptions {
  /** 0..1 strength of the shadow layer; 0.3 reads as faint guidance */
  shadowOpacity: number;
  showShadow: boolean;
}

export const DEFAULT_OVERLAY: OverlayOptions = {
  shadowOpacity: 0.3,
  showShadow: true,
};

/** Paper-style grey value of one pixel: 255 is blank paper, 0 is full ink. */
export function overlayValue(
  ink: number,
  shadow: number,
  opts: OverlayOptions,
): number {
  if (ink > 0) return 255 - ink;
  if (!opts.showShadow) return 255;
  return 255 - Math.round(shadow * opts.shadowOpacity);
}

/** RGBA buffer for putImageData; shadow may be null while loading. */
export function compositeOverlay(
  ink: GreyRaster,
  shadow: GreyRaster | null,
  opts: OverlayOptions = DEFAULT_OVERLAY,
): Uint8ClampedArray<ArrayBuffer> {
  if (shadow && (shadow.width !== ink.width || shadow.height !== ink.height)) {
    throw new Error("shadow size does not match the canvas");
  }
  const out = new Uint8ClampedArray(ink.width * ink.height * 4);
  for (let i = 0; i < ink.pixels.length; i++) {
    const v = overlayValue(ink.pixels[i], shadow ? shadow.pixels[i] : 0, opts);
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Plain paper view of a single raster (used for the preview pane). */
export function paperView(raster: GreyRaster): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(raster.width * raster.height * 4);
  for (let i = 0; i < raster.pixels.length; i++) {
    const v = 255 - raster.pixels[i];
    out[i * 4] = v;
    out[i * 4 + 1] = v;
    out[i * 4 + 2] = v;
    out[i * 4 + 3] = 255;
  }
  return out;
}
