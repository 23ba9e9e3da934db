/** Decoding for the base64 P5 rasters the service sends. */

export interface GreyRaster {
  width: number;
  height: number;
  /** row-major, 0 = black paper, 255 = full ink */
  pixels: Uint8Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}

/** Parse binary P5 bytes; maxval must be 255 and the payload complete. */
export function parsePgm(bytes: Uint8Array): GreyRaster {
  if (bytes.length < 2 || bytes[0] !== 0x50 || bytes[1] !== 0x35) {
    throw new Error("not a P5 raster");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (pos < bytes.length && bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    if (pos === start) throw new Error("truncated P5 header");
    let value = 0;
    for (let i = start; i < pos; i++) {
      const d = bytes[i] - 0x30;
      if (d < 0 || d > 9) throw new Error("bad number in P5 header");
      value = value * 10 + d;
    }
    fields.push(value);
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  if (width < 1 || height < 1) throw new Error("bad P5 dimensions");
  if (bytes.length - pos < width * height) throw new Error("truncated P5 payload");
  return { width, height, pixels: bytes.slice(pos, pos + width * height) };
}

export function decodeBase64Pgm(b64: string): GreyRaster {
  const text = atob(b64);
  const bytes = new Uint8Array(text.length);
  for (let i = 0; i < text.length; i++) bytes[i] = text.charCodeAt(i);
  return parsePgm(bytes);
}

/** Count of pixels whose ink differs between two equally sized rasters. */
export function pixelDiffCount(a: GreyRaster, b: GreyRaster): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("raster sizes differ");
  }
  let n = 0;
  for (let i = 0; i < a.pixels.length; i++) {
    if (a.pixels[i] !== b.pixels[i]) n++;
  }
  return n;
}
