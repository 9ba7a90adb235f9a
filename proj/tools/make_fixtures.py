#!/usr/bin/env python3
"""Regenerates the bundled fixtures under data/fixtures.

Everything is seeded, so running this twice produces identical files.

  python3 tools/make_fixtures.py [--out data/fixtures]
"""

import argparse
import json
import math
import random
import struct
from pathlib import Path

CATEGORIES = ["chat", "chat_hard", "safety", "reasoning"]
PAIRS_PER_CATEGORY = 1000

# Per-category accuracies (percent) the transfer fixtures hit exactly,
# target-language RM vs English RM.
TRANSFER_CELLS = {
    "es": {
        "target_model": "L32-3B-IT-Sp",
        "target": [79.1, 67.3, 88.0, 65.5],
        "english": [86.3, 69.3, 89.3, 72.4],
    },
    "zh": {
        "target_model": "L32-3B-IT-Ch",
        "target": [68.7, 59.9, 81.2, 52.6],
        "english": [54.7, 64.0, 82.6, 79.3],
    },
}
ENGLISH_MODEL = "L32-3B-IT-En"

LANGUAGES = ["en", "es", "it", "ko", "zh"]


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")


def write_xrmd(path, model_name, d_model, vocab_size, tensors, extra=None):
    """tensors: name -> (shape, flat list of floats)."""
    meta_tensors = {}
    payload = bytearray()
    for name in sorted(tensors):
        shape, values = tensors[name]
        assert len(values) == math.prod(shape)
        meta_tensors[name] = {"length_bytes": 4 * len(values), "offset": len(payload), "shape": list(shape)}
        payload += struct.pack("<%df" % len(values), *values)
    meta = {"d_model": d_model, "dtype": "f32", "model_name": model_name, "tensors": meta_tensors,
            "vocab_size": vocab_size}
    if extra:
        meta["extra"] = extra
    text = json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    header = b"XRMD" + struct.pack("<IQ", 1, len(text))
    body = header + text
    if tensors:
        body += b"\0" * ((-len(body)) % 64)
    Path(path).write_bytes(body + payload)


def transfer(out, rng):
    out = out / "transfer"
    out.mkdir(parents=True, exist_ok=True)
    for lang, cells in TRANSFER_CELLS.items():
        pairs, rewards = [], []
        correct = {}
        for c, cat in enumerate(CATEGORIES):
            for key in ("target", "english"):
                n = round(cells[key][c] * PAIRS_PER_CATEGORY / 100)
                ids = list(range(PAIRS_PER_CATEGORY))
                rng.shuffle(ids)
                correct[(key, cat)] = set(ids[:n])
            for i in range(PAIRS_PER_CATEGORY):
                pid = "%s-%s-%04d" % (lang, cat, i)
                pairs.append({"pair_id": pid, "prompt": "prompt %s" % pid, "chosen": "preferred answer to %s" % pid,
                              "rejected": "dispreferred answer to %s" % pid, "category": cat, "language": lang})
                for key, model in (("target", cells["target_model"]), ("english", ENGLISH_MODEL)):
                    low = round(rng.uniform(-4.0, 3.0), 4)
                    high = round(low + rng.uniform(0.01, 2.0), 4)
                    good = i in correct[(key, cat)]
                    rewards.append({"example_id": pid, "response_id": "chosen", "reward": high if good else low,
                                    "language": lang, "model_name": model})
                    rewards.append({"example_id": pid, "response_id": "rejected", "reward": low if good else high,
                                    "language": lang, "model_name": model})
        write_jsonl(out / ("pairs_%s.jsonl" % lang), pairs)
        write_jsonl(out / ("rewards_%s.jsonl" % lang), rewards)


def parallel(out, rng, examples=10, d_model=16):
    out = out / "parallel"
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    base, tuned = {}, {}
    for e in range(examples):
        eid = "ctx%02d" % e
        shared = [rng.gauss(0, 1) for _ in range(d_model)]
        for lang in LANGUAGES:
            manifest.append({"example_id": eid, "language": lang})
            own = [rng.gauss(0, 1) for _ in range(d_model)]
            # The base model keeps languages apart; the English-tuned model
            # pulls every language toward the shared direction.
            base["hidden/%s/%s" % (eid, lang)] = ([d_model], [0.6 * s + o for s, o in zip(shared, own)])
            tuned["hidden/%s/%s" % (eid, lang)] = ([d_model], [1.5 * s + 0.4 * o for s, o in zip(shared, own)])
    write_jsonl(out / "parallel.jsonl", manifest)
    write_xrmd(out / "base.xrmd", "L32-3B-IT", d_model, 0, base, {"pooling": "last_non_padding_token"})
    write_xrmd(out / "rm_en.xrmd", "L32-3B-IT-En", d_model, 0, tuned, {"pooling": "last_non_padding_token"})


def vocab(out, rng, d_model=8):
    out = out / "vocab"
    out.mkdir(parents=True, exist_ok=True)
    tokens = ["<unk>", "<s>", "</s>", "<0x0A>", "<0xE4>"]
    tokens += ["▁the", "▁of", "▁and", "ing", "tion", "▁casa", "▁perro", "▁gatto", "▁della", "▁que", "▁el",
               "▁di", "▁con", "▁il", "▁la", "▁los", "▁house", "▁dog", "ment", "s"]
    tokens += ["한", "국", "▁한국", "어", "▁사람", "는", "에서", "습니다", "▁그리고", "이"]
    tokens += ["中", "国", "▁中国", "人", "的", "是", "▁我们", "学习", "语言", "模型"]
    tokens += ["7", "42", "▁2024", ".", ",", "!", "▁", "▁-", "abc中", "한a"]
    (out / "vocab.json").write_text(json.dumps({"tokens": tokens}, ensure_ascii=False, indent=1) + "\n",
                                    encoding="utf-8")

    rows = []
    for tok in tokens:
        # Hangul rows shortest, Han in between, everything else at unit scale.
        scale = 1.0
        if any("가" <= ch <= "힣" for ch in tok):
            scale = 0.8
        elif any("一" <= ch <= "鿿" for ch in tok):
            scale = 0.9
        rows.extend(scale * rng.gauss(0, 1) for _ in range(d_model))
    write_xrmd(out / "embeddings.xrmd", "L32-3B-IT", d_model, len(tokens), {"embeddings": ([len(tokens), d_model], rows)})

    (out / "rules_script.json").write_text(json.dumps({
        "mode": "script",
        "script_map": {"Latin": "en", "Hangul": "ko", "Han": "zh"},
        "detok_markers": ["▁", "Ġ", "##"],
        "min_letters": 1,
    }, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    lexicons = {
        "en": ["the", "of", "and", "house", "dog"],
        "es": ["casa", "perro", "que", "el", "la", "los", "con"],
        "it": ["gatto", "della", "di", "il", "la", "con", "casa"],
    }
    for lang, words in lexicons.items():
        (out / ("lexicon_%s.txt" % lang)).write_text("\n".join(words) + "\n", encoding="utf-8")
    (out / "rules_lexicon.json").write_text(json.dumps({
        "mode": "lexicon",
        "lexicons": {lang: "lexicon_%s.txt" % lang for lang in lexicons},
        "detok_markers": ["▁", "Ġ", "##"],
    }, indent=2) + "\n", encoding="utf-8")


def features(out, rng, pairs=200, d_model=16):
    out = out / "features"
    out.mkdir(parents=True, exist_ok=True)
    w = [rng.gauss(0, 1) for _ in range(d_model)]
    norm = math.sqrt(sum(x * x for x in w))
    w = [x / norm for x in w]
    tensors, rows = {}, []
    for i in range(pairs):
        pid = "fp%03d" % i
        while True:
            a = [rng.gauss(0, 1) for _ in range(d_model)]
            b = [rng.gauss(0, 1) for _ in range(d_model)]
            margin = sum(wi * (x - y) for wi, x, y in zip(w, a, b))
            if abs(margin) >= 0.5:
                break
        chosen, rejected = (a, b) if margin > 0 else (b, a)
        tensors["hidden/%s/chosen/feat" % pid] = ([d_model], chosen)
        tensors["hidden/%s/rejected/feat" % pid] = ([d_model], rejected)
        rows.append({"pair_id": pid, "prompt": "p%d" % i, "chosen": "a%d" % i, "rejected": "b%d" % i,
                     "category": "chat", "language": "en"})
    write_xrmd(out / "features.xrmd", "L32-3B-IT-feat", d_model, 0, tensors)
    write_jsonl(out / "pairs.jsonl", rows)


def best_of_n(out, rng, prompts=12):
    out = out / "best_of_n"
    out.mkdir(parents=True, exist_ok=True)
    rewards, responses = [], []
    for p in range(prompts):
        eid = "q%02d" % p
        lang = LANGUAGES[p % len(LANGUAGES)]
        n = 4 if p != 5 else 3
        values = [round(rng.uniform(-2, 2), 3) for _ in range(n)]
        if p == 7:
            values = [0.25] * n
        for r in range(n):
            rid = "r%d" % r
            responses.append({"example_id": eid, "response_id": rid, "prompt": "question %d" % p,
                              "response": "answer %d to question %d" % (r, p), "language": lang})
            rewards.append({"example_id": eid, "response_id": rid, "reward": values[r], "language": lang,
                            "model_name": ENGLISH_MODEL})
    write_jsonl(out / "responses.jsonl", responses)
    write_jsonl(out / "rewards.jsonl", rewards)


def judge(out, rng, count=20):
    out = out / "judge"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(count):
        lang = LANGUAGES[i % len(LANGUAGES)]
        rows.append({"instance_id": "alpaca-%03d" % i, "prompt": "instruction %d" % i,
                     "candidate": "candidate answer " + "x" * rng.randint(1, 30),
                     "reference": "reference answer " + "y" * rng.randint(1, 30), "language": lang})
    write_jsonl(out / "instances.jsonl", rows)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "fixtures")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    transfer(args.out, random.Random(1))
    parallel(args.out, random.Random(2))
    vocab(args.out, random.Random(3))
    features(args.out, random.Random(4))
    best_of_n(args.out, random.Random(5))
    judge(args.out, random.Random(6))


if __name__ == "__main__":
    main()
