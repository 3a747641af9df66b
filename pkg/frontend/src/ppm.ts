// Binary PPM (P6) decoder: the service serves images as
// image/x-portable-pixmap, which browsers cannot render natively, so the UI
// decodes to RGBA and paints onto a canvas.

export interface DecodedPpm {
  width: number;
  height: number;
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

export function decodePpm(buffer: ArrayBuffer): DecodedPpm {
  const bytes = new Uint8Array(buffer);
  let pos = 0;
  const isSpace = (b: number) => b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;

  function nextField(): string {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) {
      // comment: skip to end of line, then retry
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      return nextField();
    }
    const start = pos;
    while (pos < bytes.length && !isSpace(bytes[pos])) pos++;
    return String.fromCharCode(...bytes.slice(start, pos));
  }

  const magic = nextField();
  if (magic !== "P6") throw new Error(`not a P6 ppm (magic ${magic})`);
  const width = parseInt(nextField(), 10);
  const height = parseInt(nextField(), 10);
  const maxval = parseInt(nextField(), 10);
  if (!(width > 0 && height > 0)) throw new Error("bad ppm dimensions");
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  pos += 1; // single whitespace after maxval

  const need = width * height * 3;
  if (bytes.length - pos < need) throw new Error("truncated ppm pixel data");
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = bytes[pos + i * 3];
    rgba[i * 4 + 1] = bytes[pos + i * 3 + 1];
    rgba[i * 4 + 2] = bytes[pos + i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

export function drawPpm(canvas: HTMLCanvasElement, decoded: DecodedPpm, scale = 6): void {
  canvas.width = decoded.width * scale;
  canvas.height = decoded.height * scale;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const off = new OffscreenCanvas(decoded.width, decoded.height);
  const offCtx = off.getContext("2d")!;
  offCtx.putImageData(new ImageData(decoded.rgba, decoded.width, decoded.height), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}
