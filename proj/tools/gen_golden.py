#!/usr/bin/env python3
"""Regenerate the FHTF golden fixtures in tests/fixtures/.

This is a separate, straightforward numpy implementation of the fusion
forward pass (ConvLSTM step, node alignment, numpy.fft spectral statistics,
anchor modulation, softmax incidence, dual-hop refinement, scatter-back). It
shares nothing with the C++ headers except the FHW1 layout and tensor names.
Stage outputs are rounded to float32 where the C++ code stores float32.

    python3 tools/gen_golden.py [output_dir]
"""

import struct
import sys
from pathlib import Path

import numpy as np

F32 = np.float32


def write_fhw1(path, tensors):
    out = bytearray(b"FHW1")
    out += struct.pack("<I", 1)
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack("<%dI" % arr.ndim, *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def make_params(rng, channels, C, dk, H, k=3, scale=0.3):
    u = lambda shape, half: rng.uniform(-half, half, size=shape).astype(F32)
    p = {"alpha": rng.uniform(0.5, 1.5, size=3).astype(F32)}
    for i, ci in enumerate(channels):
        p[f"lstm.{i}.weight"] = u((4 * ci, 2 * ci, k, k), scale)
        p[f"lstm.{i}.bias"] = np.zeros(4 * ci, F32)
        p[f"in_proj.{i}.weight"] = u((C, ci), scale)
        p[f"in_proj.{i}.bias"] = u((C,), scale)
        p[f"out_proj.{i}.weight"] = u((ci, C), scale)
    p["prototypes"] = u((H, dk), 1.0)
    p["mod.weight"] = u((2 * dk, 4 * C), scale * 0.1)
    p["mod.bias"] = u((2 * dk,), scale)
    p["key.weight"] = u((dk, C), scale)
    p["key.bias"] = u((dk,), scale)
    p["agg.weight"] = u((C, C), scale)
    p["agg.bias"] = u((C,), scale)
    p["bcast.weight"] = u((C, C), scale)
    p["bcast.bias"] = u((C,), scale)
    p["gate"] = u((C,), 1.0)
    p["temperature"] = np.ones(1, F32)
    return p


def param_list(p, channels):
    names = ["alpha"]
    for i in range(len(channels)):
        names += [f"lstm.{i}.weight", f"lstm.{i}.bias", f"in_proj.{i}.weight",
                  f"in_proj.{i}.bias", f"out_proj.{i}.weight"]
    names += ["prototypes", "mod.weight", "mod.bias", "key.weight", "key.bias",
              "agg.weight", "agg.bias", "bcast.weight", "bcast.bias", "gate", "temperature"]
    return [(n, p[n]) for n in names]


def convlstm(x, h, c, weight, bias):
    ci, H, W = x.shape
    k = weight.shape[-1]
    pad = k // 2
    inp = np.concatenate([x, h], axis=0).astype(np.float64)
    padded = np.zeros((2 * ci, H + 2 * pad, W + 2 * pad))
    padded[:, pad:pad + H, pad:pad + W] = inp
    gates = np.zeros((4 * ci, H, W))
    w = weight.astype(np.float64)
    for oc in range(4 * ci):
        acc = np.full((H, W), float(bias[oc]))
        for ic in range(2 * ci):
            for ky in range(k):
                for kx in range(k):
                    acc += w[oc, ic, ky, kx] * padded[ic, ky:ky + H, kx:kx + W]
        gates[oc] = acc
    i, f, g, o = np.split(gates, 4, axis=0)
    c_new = sigmoid(f) * c + sigmoid(i) * np.tanh(g)
    h_new = sigmoid(o) * np.tanh(c_new)
    return h_new.astype(F32), c_new.astype(F32)


def temporal(p, feats, hid, cel):
    outs, hs, cs = [], [], []
    for i, f in enumerate(feats):
        h2, c2 = convlstm(f, hid[i], cel[i], p[f"lstm.{i}.weight"], p[f"lstm.{i}.bias"])
        a = float(p["alpha"][i])
        outs.append(f if a == 0.0 else (f.astype(np.float64) + a * h2.astype(np.float64)).astype(F32))
        hs.append(h2)
        cs.append(c2)
    return outs, hs, cs


def align(p, feats):
    rows = []
    for i, f in enumerate(feats):
        tokens = f.reshape(f.shape[0], -1).T.astype(np.float64)
        rows.append(tokens @ p[f"in_proj.{i}.weight"].astype(np.float64).T + p[f"in_proj.{i}.bias"])
    return np.concatenate(rows, axis=0).astype(F32)


def statistics(X):
    amp = np.abs(np.fft.fft(X.astype(np.float64), axis=0))
    desc = np.concatenate([amp.mean(axis=0), amp.max(axis=0)])
    pooled = np.concatenate([X.astype(np.float64).mean(axis=0), X.astype(np.float64).max(axis=0)])
    return desc, pooled


def anchors(p, desc, pooled):
    dk = p["prototypes"].shape[1]
    stats = np.concatenate([desc, pooled])
    mod = p["mod.weight"].astype(np.float64) @ stats + p["mod.bias"]
    scale, shift = mod[:dk], mod[dk:]
    return (p["prototypes"].astype(np.float64) * (1.0 + scale) + shift).astype(F32)


def incidence(p, X, A):
    dk = A.shape[1]
    keys = X.astype(np.float64) @ p["key.weight"].astype(np.float64).T + p["key.bias"]
    logits = keys @ A.astype(np.float64).T / (np.sqrt(dk) * float(p["temperature"][0]))
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return (e / e.sum(axis=1, keepdims=True)).astype(F32)


def refinement(p, X, Hm):
    Hd, Xd = Hm.astype(np.float64), X.astype(np.float64)
    edges = Hd.T @ Xd
    agg = edges @ p["agg.weight"].astype(np.float64).T + p["agg.bias"]
    nodes = Hd @ agg
    bc = nodes @ p["bcast.weight"].astype(np.float64).T + p["bcast.bias"]
    return (p["gate"].astype(np.float64) * bc).astype(F32)


def scatter(p, feats, term):
    out, row = [], 0
    live = p["gate"] != 0
    for i, f in enumerate(feats):
        ci, H, W = f.shape
        n = H * W
        t = term[row:row + n].astype(np.float64)[:, live]
        w = p[f"out_proj.{i}.weight"].astype(np.float64)[:, live]
        delta = (t @ w.T).T.reshape(ci, H, W)
        out.append((f.astype(np.float64) + delta).astype(F32))
        row += n
    return out


def pyramid(rng, channels, side):
    return [rng.uniform(-1, 1, size=(c, max(1, side >> i), max(1, side >> i))).astype(F32)
            for i, c in enumerate(channels)]


def main(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Temporal stage: C = 8 at every scale, 4x4 base resolution.
    rng = np.random.default_rng(42)
    ch = (8, 8, 8)
    p = make_params(rng, ch, C=8, dk=4, H=8)
    feats = pyramid(rng, ch, 4)
    hid = pyramid(rng, ch, 4)
    cel = pyramid(rng, ch, 4)
    out, hs, cs = temporal(p, feats, hid, cel)
    t = param_list(p, ch)
    for i in range(3):
        t += [(f"input.{i}", feats[i]), (f"state.hidden.{i}", hid[i]), (f"state.cell.{i}", cel[i])]
    for i in range(3):
        t += [(f"expected.{i}", out[i]), (f"expected.hidden.{i}", hs[i]), (f"expected.cell.{i}", cs[i])]
    write_fhw1(out_dir / "temporal_seed42.fhw", t)

    # Anchor modulation from random statistics.
    rng = np.random.default_rng(7)
    ch = (4, 4, 4)
    p = make_params(rng, ch, C=6, dk=5, H=8)
    desc = rng.uniform(0, 3, size=12).astype(F32)
    pooled = rng.uniform(-1, 1, size=12).astype(F32)
    A = anchors(p, desc.astype(np.float64), pooled.astype(np.float64))
    t = param_list(p, ch) + [("anchors.descriptor", desc), ("anchors.pooled", pooled), ("expected.anchors", A)]
    write_fhw1(out_dir / "anchors_seed7.fhw", t)

    # End-to-end forward pass, H = 8.
    rng = np.random.default_rng(123)
    ch = (4, 6, 8)
    p = make_params(rng, ch, C=8, dk=4, H=8)
    feats = pyramid(rng, ch, 8)
    hid = pyramid(rng, ch, 8)
    cel = pyramid(rng, ch, 8)
    ev, hs, cs = temporal(p, feats, hid, cel)
    X = align(p, ev)
    desc, pooled = statistics(X)
    A = anchors(p, desc, pooled)
    Hm = incidence(p, X, A)
    term = refinement(p, X, Hm)
    out = scatter(p, ev, term)
    t = param_list(p, ch)
    for i in range(3):
        t += [(f"input.{i}", feats[i]), (f"state.hidden.{i}", hid[i]), (f"state.cell.{i}", cel[i])]
    for i in range(3):
        t += [(f"expected.{i}", out[i]), (f"expected.hidden.{i}", hs[i]), (f"expected.cell.{i}", cs[i])]
    t += [("expected.incidence", Hm), ("expected.anchors", A)]
    write_fhw1(out_dir / "forward_seed123.fhw", t)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests" / "fixtures")
