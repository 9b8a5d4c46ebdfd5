"""Straightforward pure-Python reimplementation of the generator and toy model.

Writes tests/data/golden_toy.json and tests/data/golden_model.json, which
the C++ unit tests compare against.
Run from the repository root: python3 tests/oracles/toy_oracle.py
"""
import json
import math
import os

M64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SALT = 0x632BE59BD9B4E019
BOS, EOS, PAD = 0, 1, 2


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & M64


class Rng:
    def __init__(self, seed, stream=0):
        self.seed, self.stream = seed, stream
        x = mix64(seed) ^ mix64((stream + SALT) & M64)
        self.s = []
        for _ in range(4):
            x = (x + GOLDEN) & M64
            self.s.append(mix64(x))

    def split(self, i):
        return Rng(self.seed, mix64(self.stream ^ mix64((i + GOLDEN) & M64)))

    def next_u64(self):
        s = self.s
        result = (rotl((s[1] * 5) & M64, 7) * 9) & M64
        t = (s[1] << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n):
        while True:
            prod = self.next_u64() * n
            low = prod & M64
            if low >= ((1 << 64) - n) % n:
                return prod >> 64

    def normal(self):
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def categorical(self, w):
        target = self.uniform() * sum(w)
        acc, last = 0.0, 0
        for i, x in enumerate(w):
            if x <= 0.0:
                continue
            acc += x
            last = i
            if target < acc:
                return i
        return last


def gaussian(rows, cols, std, rng):
    return [[rng.normal() * std for _ in range(cols)] for _ in range(rows)]


class Model:
    def __init__(self, v, d, seed):
        std = d ** -0.25
        self.v, self.d = v, d
        self.e_in = gaussian(v, d, std, Rng(seed, 0))
        self.w_h = gaussian(d, d, std, Rng(seed, 1))
        # The fixtures used here never need a rank retry.
        self.e_out = gaussian(v, d, std, Rng(seed, 2))

    def advance(self, h, tok):
        return [math.tanh(sum(self.w_h[i][j] * h[j] for j in range(self.d)) + self.e_in[tok][i])
                for i in range(self.d)]

    def encode(self, ctx):
        h = [0.0] * self.d
        for t in ctx:
            h = self.advance(h, t)
        return h

    def logits(self, h):
        return [sum(self.e_out[r][j] * h[j] for j in range(self.d)) for r in range(self.v)]


def decode(model, prompt, max_tokens, temperature, greedy, rng):
    h = model.encode(prompt)
    out = []
    for _ in range(max_tokens):
        z = model.logits(h)
        allowed = [i not in (BOS, PAD) for i in range(model.v)]
        if greedy:
            tok = max((i for i in range(model.v) if allowed[i]), key=lambda i: (z[i], -i))
        else:
            zz = [x / temperature for x in z]
            m = max(zz[i] for i in range(model.v) if allowed[i])
            w = [math.exp(zz[i] - m) if allowed[i] else 0.0 for i in range(model.v)]
            tok = rng.categorical(w)
        if tok == EOS:
            break
        out.append(tok)
        h = model.advance(h, tok)
    return out


def self_check():
    # Published reference outputs: xoshiro256** from state {1, 2, 3, 4} and
    # SplitMix64 seeded with 1234567.
    r = Rng(0)
    r.s = [1, 2, 3, 4]
    assert [r.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]
    assert mix64((1234567 + GOLDEN) & M64) == 6457827717110365317


def main():
    self_check()
    g = {}
    r = Rng(42)
    g["rng_42_u64"] = [str(r.next_u64()) for _ in range(4)]
    r = Rng(7, 3)
    g["rng_7_3_uniform"] = [r.uniform() for _ in range(4)]
    g["rng_7_3_normal"] = [r.normal() for _ in range(4)]
    g["rng_7_3_below_29"] = [r.below(29) for _ in range(8)]
    child = Rng(42).split(5)
    g["rng_42_split5_u64"] = [str(child.next_u64()) for _ in range(2)]

    m = Model(32, 8, 1)
    ctx = [BOS, 5, 9, 3, 17]
    g["model_seed1_e_in_row0"] = m.e_in[0]
    g["model_seed1_context"] = ctx
    g["model_seed1_next_logits"] = m.logits(m.encode(ctx))
    g["model_seed1_greedy_20"] = decode(m, ctx, 20, 1.0, True, None)
    g["model_seed1_sample_T1_rng99_30"] = decode(m, ctx, 30, 1.0, False, Rng(99))
    g["model_seed1_sample_T06_rng99_30"] = decode(m, ctx, 30, 0.6, False, Rng(99))
    small = Model(16, 4, 7)
    g["model_v16_d4_seed7_next_logits_0_5_9"] = small.logits(small.encode([BOS, 5, 9]))
    g["model_v16_d4_seed7_greedy_0_3"] = decode(small, [BOS, 3], 20, 1.0, True, None)
    g["model_v16_d4_seed7_sample_0_3_rng2024"] = decode(small, [BOS, 3], 20, 1.0, False, Rng(2024))

    data = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
    with open(os.path.join(data, "golden_toy.json"), "w") as f:
        json.dump(g, f, indent=1)
        f.write("\n")
    doc = {"schema": "toymodel/1", "name": "golden", "identity": "golden-1b", "v": 16, "d": 4, "seed": 7,
           "E_in": small.e_in, "W_h": small.w_h, "E_out": small.e_out}
    with open(os.path.join(data, "golden_model.json"), "w") as f:
        json.dump(doc, f)
        f.write("\n")


if __name__ == "__main__":
    main()
