// Minimal palette brush for revision editing: paints hard-edged circles of
// palette colors onto an RGBA buffer. Restricted to palette colors so edited
// plans stay decodable; operates on plain arrays, DOM-free.
export function paintCircle(pixels, width, height, cx, cy, radius, color) {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
        for (let x = x0; x <= x1; x++) {
            const dx = x - cx;
            const dy = y - cy;
            if (dx * dx + dy * dy <= r2) {
                const i = (y * width + x) * 4;
                pixels[i] = color.r;
                pixels[i + 1] = color.g;
                pixels[i + 2] = color.b;
                pixels[i + 3] = 255;
            }
        }
    }
}
/** Nearest palette entry by RGB distance; used by the eyedropper so picked
 * colors snap back onto the palette. */
export function nearestPaletteEntry(color, palette) {
    let best = palette[0];
    let bestD = Infinity;
    for (const entry of palette) {
        const [r, g, b] = entry.rgb;
        const d = (r - color.r) ** 2 + (g - color.g) ** 2 + (b - color.b) ** 2;
        if (d < bestD) {
            bestD = d;
            best = entry;
        }
    }
    return best;
}
/** True when every pixel in the buffer is an exact palette color. */
export function isPaletteConformant(pixels, palette) {
    const allowed = new Set(palette.map((p) => (p.rgb[0] << 16) | (p.rgb[1] << 8)
        | p.rgb[2]));
    for (let i = 0; i < pixels.length; i += 4) {
        const key = (pixels[i] << 16) | (pixels[i + 1] << 8) | pixels[i + 2];
        if (!allowed.has(key))
            return false;
    }
    return true;
}
