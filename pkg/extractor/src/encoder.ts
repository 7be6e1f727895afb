/** Encoder abstraction so the pipeline is testable without model weights. */

export interface ClipEncoder {
  /** Embedding dimensionality (512 for ViT-B/32). */
  readonly dim: number;
  /** Unit-norm text embeddings, one per input, in order. */
  encodeTexts(texts: string[]): Promise<Float32Array[]>;
  /**
   * Unit-norm image embeddings for the files at `paths`, in order.
   * When `flip` is set the images are mirrored horizontally before encoding.
   */
  encodeImages(paths: string[], flip: boolean): Promise<Float32Array[]>;
}
