// Optional encoder dependencies are resolved at runtime only; these shims
// keep the build independent of whether they are installed.
declare module "@tensorflow/tfjs";

declare module "@tensorflow-models/universal-sentence-encoder" {
  export function load(): Promise<{
    embed(texts: string[]): Promise<{ arraySync(): number[][]; dispose(): void }>;
  }>;
}
