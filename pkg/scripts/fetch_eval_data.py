#!/usr/bin/env python3
"""Fetch and convert the frozen-vector evaluation inputs.

Produces, under data/eval/:

  turney.tsv   six columns: query phrase, gold unigram, four distractors
  bird.tsv     three columns: phrase a, phrase b, relatedness in [0, 1]
  glove.pvec   GloVe vectors restricted to the tokens those two files use

The GloVe archive is ~2GB; only the rows the evaluation needs are kept, so
the converted file stays small and the evaluation commands run in seconds.
Needs a network connection; everything is cached in data/raw/ so reruns
convert without downloading.

Raw-format notes
  Turney (2012) bigram composition data: whitespace-separated rows
      bigram gold component1 component2 distractor1 ... distractor5
  where the task keeps the gold plus four non-component distractors.
  BiRD: tab-separated with a header; the columns used are term1, term2,
  and the final relatedness score, already scaled to [0, 1].

If either upstream file arrives in a different shape, the converter stops
with a message naming the offending line rather than guessing.
"""

import argparse
import sys
import urllib.request
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
RAW = ROOT / "data" / "raw"
OUT = ROOT / "data" / "eval"

GLOVE_URL = "https://nlp.stanford.edu/data/glove.840B.300d.zip"
GLOVE_MEMBER = "glove.840B.300d.txt"
TURNEY_URL = (
    "https://raw.githubusercontent.com/NLPrinceton/ALaCarte/master/eval/turney.txt"
)
BIRD_URL = "https://saifmohammad.com/WebDocs/BiRD/BiRD.txt"


def fetch(url: str, dest: Path) -> Path:
    dest.parent.mkdir(parents=True, exist_ok=True)
    if dest.exists():
        print(f"cached   {dest}")
        return dest
    print(f"fetching {url}")
    tmp = dest.with_suffix(dest.suffix + ".part")
    with urllib.request.urlopen(url) as resp, open(tmp, "wb") as fh:
        while chunk := resp.read(1 << 20):
            fh.write(chunk)
    tmp.rename(dest)
    print(f"wrote    {dest}")
    return dest


def convert_turney(raw: Path, dest: Path) -> set[str]:
    """Keep the gold and the four distractors; drop the two component
    unigrams, which would otherwise hand the mean-pooled baseline the
    answer by construction."""
    tokens: set[str] = set()
    rows = []
    with open(raw, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("|") if "|" in line else line.split()
            parts = [p.strip() for p in parts if p.strip()]
            if not parts:
                continue
            if len(parts) < 9:
                sys.exit(
                    f"{raw}:{lineno}: expected bigram, gold, two components and "
                    f"five distractors, got {len(parts)} fields"
                )
            bigram, gold = parts[0], parts[1]
            components = set(parts[2:4])
            distractors = [c for c in parts[4:] if c not in components][:4]
            if len(distractors) < 4:
                sys.exit(f"{raw}:{lineno}: fewer than four usable distractors")
            rows.append([bigram, gold, *distractors])
            tokens.update(bigram.split())
            for c in (gold, *distractors):
                tokens.update(c.split())
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write("\t".join(row) + "\n")
    print(f"wrote    {dest} ({len(rows)} items)")
    return tokens


def convert_bird(raw: Path, dest: Path) -> set[str]:
    tokens: set[str] = set()
    rows = []
    with open(raw, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        cols = {name.strip().lower(): i for i, name in enumerate(header)}
        try:
            ia, ib = cols["term1"], cols["term2"]
        except KeyError:
            sys.exit(f"{raw}: header lacks term1/term2 columns: {header}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            try:
                score = float(parts[-1])
            except ValueError:
                sys.exit(f"{raw}:{lineno}: last column is not a score: {parts[-1]!r}")
            if not 0.0 <= score <= 1.0:
                sys.exit(f"{raw}:{lineno}: score {score} outside [0, 1]")
            a, b = parts[ia].strip(), parts[ib].strip()
            rows.append((a, b, score))
            tokens.update(a.split())
            tokens.update(b.split())
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        for a, b, score in rows:
            fh.write(f"{a}\t{b}\t{score!r}\n")
    print(f"wrote    {dest} ({len(rows)} pairs)")
    return tokens


def convert_glove(archive: Path, needed: set[str], dest: Path) -> None:
    kept = []
    with zipfile.ZipFile(archive) as zf, zf.open(GLOVE_MEMBER) as fh:
        for raw_line in fh:
            line = raw_line.decode("utf-8", errors="replace").rstrip("\n")
            token, _, rest = line.partition(" ")
            if token in needed:
                kept.append((token, rest))
    if not kept:
        sys.exit("no requested tokens found in the GloVe archive")
    dim = len(kept[0][1].split())
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(kept)} {dim}\n")
        for token, rest in kept:
            values = " ".join(repr(float(v)) for v in rest.split())
            fh.write(f"{token}\t{values}\n")
    coverage = 100.0 * len(kept) / len(needed)
    print(f"wrote    {dest} ({len(kept)} of {len(needed)} tokens, {coverage:.1f}%)")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--glove-url", default=GLOVE_URL)
    parser.add_argument("--turney-url", default=TURNEY_URL)
    parser.add_argument("--bird-url", default=BIRD_URL)
    args = parser.parse_args()

    OUT.mkdir(parents=True, exist_ok=True)
    turney_raw = fetch(args.turney_url, RAW / "turney.txt")
    bird_raw = fetch(args.bird_url, RAW / "BiRD.txt")
    tokens = convert_turney(turney_raw, OUT / "turney.tsv")
    tokens |= convert_bird(bird_raw, OUT / "bird.tsv")
    glove_zip = fetch(args.glove_url, RAW / Path(args.glove_url).name)
    convert_glove(glove_zip, tokens, OUT / "glove.pvec")
    print("done; run the acceptance suite to verify the reproduction bands")
    return 0


if __name__ == "__main__":
    sys.exit(main())
