import { describe, expect, it } from "vitest";

import { ManifestError, parseManifest } from "../src/manifest.js";

describe("manifest parsing", () => {
  it("parses labeled and unlabeled entries", () => {
    const entries = parseManifest(
      [
        '{"id": 42953, "img": "img/42953.png", "text": "its their character not their color that matters", "label": 0}',
        '{"id": 23058, "img": "img/23058.png", "text": "dont be afraid to love again", "label": 1}',
        '{"id": 13894, "img": "img/13894.png", "text": "test caption"}',
        "",
      ].join("\n"),
    );
    expect(entries).toHaveLength(3);
    expect(entries[0]).toMatchObject({ id: 42953n, img: "img/42953.png", label: 0 });
    expect(entries[1].label).toBe(1);
    expect(entries[2].label).toBe(255); // absent label -> unlabeled sentinel
  });

  it("accepts string ids of digits", () => {
    const entries = parseManifest('{"id": "101", "img": "a.png", "text": "x", "label": 1}');
    expect(entries[0].id).toBe(101n);
  });

  it("rejects invalid JSON with the line number", () => {
    expect(() => parseManifest('{"id": 1, "img": "a.png", "text": "x"}\n{oops')).toThrow(
      /line 2/,
    );
  });

  it("rejects entries missing required fields", () => {
    expect(() => parseManifest('{"id": 1, "text": "x"}')).toThrow(ManifestError);
  });

  it("rejects labels outside 0/1", () => {
    expect(() => parseManifest('{"id": 1, "img": "a.png", "text": "x", "label": 2}')).toThrow(
      ManifestError,
    );
  });

  it("rejects duplicate ids", () => {
    const lines = [
      '{"id": 1, "img": "a.png", "text": "x", "label": 0}',
      '{"id": 1, "img": "b.png", "text": "y", "label": 1}',
    ].join("\n");
    expect(() => parseManifest(lines)).toThrow(/duplicate/);
  });
});
