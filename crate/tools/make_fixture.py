#!/usr/bin/env python3
"""Generate the offline test fixture for ioi-circuits.

Produces, under crates/ioi/tests/fixtures/tiny-gpt2/:
  - config.json, model.safetensors   (seeded randomly initialized GPT-2-format model)
  - vocab.json, merges.txt           (tiny byte-level BPE with single-token names)
  - reference_logits.safetensors     (HF transformers logits for 10 fixed token sequences)
  - reference_tokens.json            (the 10 sequences)
  - reference_bpe.json               (HF slow GPT2Tokenizer encodings of fixed strings)

The fixture pins the forward pass and tokenizer against the reference
implementation so the Rust engine can be verified without the full
GPT-2 small checkpoint.
"""

import json
import os

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "ioi", "tests", "fixtures", "tiny-gpt2")
os.makedirs(OUT, exist_ok=True)

# ---------------------------------------------------------------------------
# Tiny byte-level BPE: 256 byte symbols plus left-to-right merges that make
# a small pool of names/places/objects single tokens (with leading space).
# ---------------------------------------------------------------------------


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("\xa1"), ord("\xac") + 1)) + list(range(ord("\xae"), ord("\xff") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


BYTE_ENC = bytes_to_unicode()

WORDS = [
    " John", " Mary", " Tom", " Anna", " Paul", " Kate", " Mark", " Lisa",
    " Peter", " Sarah", " James", " Emma", " Luke", " Alice", " Henry", " Rose",
    " store", " park", " school", " office",
    " ring", " book", " drink", " snack",
]

merges = []
vocab = {}
for i in range(256):
    # id order follows the byte value, symbol is the unicode stand-in
    vocab[BYTE_ENC[i]] = i
seen = set()
for w in WORDS:
    syms = [BYTE_ENC[b] for b in w.encode("utf-8")]
    cur = syms[0]
    for nxt in syms[1:]:
        pair = (cur, nxt)
        if pair not in seen:
            seen.add(pair)
            merges.append(pair)
        cur = cur + nxt
        if cur not in vocab:
            vocab[cur] = len(vocab)
end_tok = "<|endoftext|>"
vocab[end_tok] = len(vocab)

with open(os.path.join(OUT, "vocab.json"), "w") as f:
    json.dump(vocab, f, ensure_ascii=False)
with open(os.path.join(OUT, "merges.txt"), "w") as f:
    f.write("#version: 0.2\n")
    for a, b in merges:
        f.write(f"{a} {b}\n")

VOCAB_SIZE = len(vocab)
print("tiny vocab size:", VOCAB_SIZE)

tok = GPT2Tokenizer(os.path.join(OUT, "vocab.json"), os.path.join(OUT, "merges.txt"))

BPE_CASES = [
    "",
    " John",
    " Mary went to the store",
    "Then, John and Mary went to the park, Mary was happy. John gave a ring to",
    "hello world",
    "  leading  spaces",
    "trailing spaces   ",
    "tabs\tand\nnewlines\n\n mixed",
    "it's John's, isn't it? I'll say we've 'd",
    "numbers 123 and 45,67.89",
    "punct!!! ...  --- (mixed) [brackets]",
    "unicode: héllo wörld — café",
    "CamelCase and ALLCAPS and mixed123abc",
    "a",
    " ",
    "   ",
    "\n",
    "word\n",
    "ends with space ",
]
bpe_ref = [{"text": t, "ids": tok.encode(t)} for t in BPE_CASES]
with open(os.path.join(OUT, "reference_bpe.json"), "w") as f:
    json.dump(bpe_ref, f, ensure_ascii=False, indent=1)

# names must be single tokens with a leading space
for w in WORDS:
    ids = tok.encode(w)
    assert len(ids) == 1, (w, ids)

# ---------------------------------------------------------------------------
# Tiny GPT-2-format model, seeded.
# ---------------------------------------------------------------------------

torch.manual_seed(1234)
cfg = GPT2Config(
    vocab_size=VOCAB_SIZE,
    n_positions=256,
    n_embd=32,
    n_layer=4,
    n_head=4,
    resid_pdrop=0.0,
    embd_pdrop=0.0,
    attn_pdrop=0.0,
)
model = GPT2LMHeadModel(cfg)
model.eval()

state = {k: v.clone() for k, v in model.transformer.state_dict().items() if ".attn.bias" not in k and ".attn.masked_bias" not in k}
save_file(state, os.path.join(OUT, "model.safetensors"))
with open(os.path.join(OUT, "config.json"), "w") as f:
    json.dump(
        {
            "model_type": "gpt2",
            "vocab_size": cfg.vocab_size,
            "n_positions": cfg.n_positions,
            "n_embd": cfg.n_embd,
            "n_layer": cfg.n_layer,
            "n_head": cfg.n_head,
            "layer_norm_epsilon": cfg.layer_norm_epsilon,
        },
        f,
        indent=1,
    )

# ---------------------------------------------------------------------------
# Reference logits for 10 fixed token sequences.
# ---------------------------------------------------------------------------

g = torch.Generator().manual_seed(42)
seqs = []
for i in range(10):
    n = int(torch.randint(5, 48, (1,), generator=g))
    seqs.append(torch.randint(0, VOCAB_SIZE, (n,), generator=g).tolist())

logits = {}
with torch.no_grad():
    for i, s in enumerate(seqs):
        out = model(torch.tensor([s])).logits[0]
        logits[f"logits_{i}"] = out.contiguous()
save_file(logits, os.path.join(OUT, "reference_logits.safetensors"))
with open(os.path.join(OUT, "reference_tokens.json"), "w") as f:
    json.dump(seqs, f)

print("wrote fixture to", OUT)
