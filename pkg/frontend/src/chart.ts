// Layer-importance bar chart: x-axis is layer index (shallow to deep),
// bar height is the normalized weight in [0.1, 1.0], zero-weight layers
// drawn as hollow stubs so "inactive" reads differently from "small".

export interface ImportanceBar {
  label: string;
  height: number; // 0..1, already the normalized weight
  zero: boolean;
}

export function importanceBars(layers: string[], normalized: number[]): ImportanceBar[] {
  if (layers.length !== normalized.length) {
    throw new Error(`${layers.length} layers but ${normalized.length} weights`);
  }
  return layers.map((label, i) => ({
    label,
    height: Math.max(0, Math.min(1, normalized[i])),
    zero: normalized[i] === 0,
  }));
}

export function allZero(bars: ImportanceBar[]): boolean {
  return bars.every((bar) => bar.zero);
}

export function renderImportanceChart(canvas: HTMLCanvasElement, bars: ImportanceBar[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);

  if (bars.length === 0 || allZero(bars)) {
    ctx.fillStyle = "#8a8f98";
    ctx.font = "13px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("no layer has positive importance", width / 2, height / 2);
    return;
  }

  const padBottom = 18;
  const plotHeight = height - padBottom - 6;
  const slot = width / bars.length;
  const barWidth = Math.max(4, slot * 0.6);

  bars.forEach((bar, i) => {
    const x = i * slot + (slot - barWidth) / 2;
    if (bar.zero) {
      ctx.strokeStyle = "#555b66";
      ctx.setLineDash([3, 3]);
      ctx.strokeRect(x, height - padBottom - 4, barWidth, 4);
      ctx.setLineDash([]);
    } else {
      const h = bar.height * plotHeight;
      ctx.fillStyle = "#4f8ef7";
      ctx.fillRect(x, height - padBottom - h, barWidth, h);
    }
    ctx.fillStyle = "#8a8f98";
    ctx.font = "10px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(bar.label, i * slot + slot / 2, height - 5, slot - 2);
  });
}
