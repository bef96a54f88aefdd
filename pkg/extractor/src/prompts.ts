/** Prompt construction for text-encoder inputs. */

export const DEFAULT_TEMPLATE = "A photo of a {}";

/** Render one prompt per noun, e.g. "A photo of a dining table". */
export function buildPrompts(nouns: string[], template = DEFAULT_TEMPLATE): string[] {
  if (!template.includes("{}")) {
    throw new Error(`template must contain a {} placeholder: ${template}`);
  }
  return nouns.map((w) => template.replace("{}", w));
}
