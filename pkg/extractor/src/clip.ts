/**
 * Frozen pretrained CLIP ViT-B/32 encoder via transformers.js (ONNX, CPU).
 *
 * The module is imported lazily so `verify` and the tests never pull in the
 * runtime. Text uses the tokenizer's default truncation at the model's
 * context limit; images follow the model's published preprocessing, with
 * horizontal mirroring applied on the raw pixels for flip variants.
 */

import { ClipEncoder } from "./encoder.js";
import { l2normalize } from "./gceb.js";

export const DEFAULT_MODEL = "Xenova/clip-vit-base-patch32";

type Transformers = typeof import("@huggingface/transformers");

interface EmbedsTensor {
  dims: number[];
  data: Float32Array;
}

function splitRows(embeds: EmbedsTensor): Float32Array[] {
  const [n, dim] = embeds.dims;
  const rows: Float32Array[] = [];
  for (let i = 0; i < n; i++) {
    rows.push(l2normalize(new Float32Array(embeds.data.subarray(i * dim, (i + 1) * dim))));
  }
  return rows;
}

export class TransformersClipEncoder implements ClipEncoder {
  readonly dim: number;

  private constructor(
    private readonly tf: Transformers,
    private readonly tokenizer: any,
    private readonly textModel: any,
    private readonly processor: any,
    private readonly visionModel: any,
    dim: number,
  ) {
    this.dim = dim;
  }

  static async load(model: string = DEFAULT_MODEL): Promise<TransformersClipEncoder> {
    const tf = await import("@huggingface/transformers");
    const tokenizer = await tf.AutoTokenizer.from_pretrained(model);
    const textModel = await tf.CLIPTextModelWithProjection.from_pretrained(model, {
      dtype: "fp32",
    });
    const processor = await tf.AutoProcessor.from_pretrained(model);
    const visionModel = await tf.CLIPVisionModelWithProjection.from_pretrained(model, {
      dtype: "fp32",
    });
    const dim = (textModel.config as any).projection_dim ?? 512;
    return new TransformersClipEncoder(tf, tokenizer, textModel, processor, visionModel, dim);
  }

  async encodeTexts(texts: string[]): Promise<Float32Array[]> {
    const inputs = this.tokenizer(texts, { padding: true, truncation: true });
    const { text_embeds } = await this.textModel(inputs);
    return splitRows(text_embeds);
  }

  async encodeImages(paths: string[], flip: boolean): Promise<Float32Array[]> {
    let images = await Promise.all(paths.map((p) => this.tf.RawImage.read(p)));
    if (flip) images = images.map((img) => flipHorizontal(this.tf, img));
    const inputs = await this.processor(images);
    const { image_embeds } = await this.visionModel(inputs);
    return splitRows(image_embeds);
  }
}

/** Mirror an image left-right on the raw pixel grid. */
export function flipHorizontal(tf: Transformers, image: InstanceType<Transformers["RawImage"]>) {
  const { data, width, height, channels } = image;
  const out = new Uint8ClampedArray(data.length);
  for (let y = 0; y < height; y++) {
    const row = y * width;
    for (let x = 0; x < width; x++) {
      const src = (row + (width - 1 - x)) * channels;
      const dst = (row + x) * channels;
      for (let c = 0; c < channels; c++) out[dst + c] = data[src + c];
    }
  }
  return new tf.RawImage(out, width, height, channels);
}
