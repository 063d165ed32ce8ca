#!/usr/bin/env python3
"""Regenerates workloads/*.workload from public model topologies.

Padding is folded into in_h/in_w so that (in - k) / stride + 1 is the true
output size.
"""

from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "workloads"


def ops(*pairs):
    return "[" + ", ".join(f'{{ tag = "{t}", elems = {e} }}' for t, e in pairs) + "]"


def layer(kind, dims=None, nongemm=(), comment=None):
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("[[layers]]")
    lines.append(f'kind = "{kind}"')
    if dims:
        lines.append("dims = { " + ", ".join(f"{k} = {v}" for k, v in dims.items()) + " }")
    if nongemm:
        lines.append(f"nongemm = {ops(*nongemm)}")
    return "\n".join(lines)


def conv(in_ch, out_ch, k, stride, in_hw):
    return dict(in_ch=in_ch, out_ch=out_ch, kernel_h=k, kernel_w=k, stride=stride, in_h=in_hw, in_w=in_hw)


def resnet50():
    out = ['name = "resnet50"']
    out.append(layer("conv2d", conv(3, 64, 7, 2, 229), [("relu", 64 * 112 * 112)], "stem, 224x224 input"))
    out.append(layer("elementwise_block", nongemm=[("maxpool", 64 * 112 * 112)]))
    in_ch, hw = 64, 56
    for stage, (mid, width, blocks) in enumerate([(64, 256, 3), (128, 512, 4), (256, 1024, 6), (512, 2048, 3)]):
        for b in range(blocks):
            stride = 2 if stage > 0 and b == 0 else 1
            out_hw = hw // stride
            tag = f"stage {stage + 1} block {b + 1}"
            out.append(layer("conv2d", conv(in_ch, mid, 1, 1, hw), [("relu", mid * hw * hw)], tag))
            pad_in = out_hw * stride + (2 if stride == 1 else 1)
            out.append(layer("conv2d", conv(mid, mid, 3, stride, pad_in), [("relu", mid * out_hw * out_hw)]))
            out.append(layer("conv2d", conv(mid, width, 1, 1, out_hw)))
            if b == 0:
                proj_in = hw if stride == 1 else hw - 1
                out.append(layer("conv2d", conv(in_ch, width, 1, stride, proj_in), comment="projection shortcut"))
            n = width * out_hw * out_hw
            out.append(layer("elementwise_block", nongemm=[("add", n), ("relu", n)]))
            in_ch, hw = width, out_hw
    out.append(layer("elementwise_block", nongemm=[("avgpool", 2048 * 7 * 7)]))
    out.append(layer("dense", dict(in_features=2048, out_features=1000), [("softmax", 1000)]))
    return "\n\n".join(out) + "\n"


def bert_large(layers=24, d=1024, heads=16, seq=384, ffn=4096):
    dh = d // heads
    out = ['name = "bertlarge"']
    for i in range(layers):
        for j, proj in enumerate("QKV"):
            out.append(layer("attention_proj", dict(d_model=d, d_proj=d, seq_len=seq),
                             comment=f"encoder {i + 1}" if j == 0 else None))
        out.append(layer("attention_proj", dict(d_model=dh, d_proj=heads * seq, seq_len=seq),
                         [("mul", heads * seq * seq), ("softmax", heads * seq * seq)],
                         "scores, all heads: Q rows against K^T"))
        out.append(layer("attention_proj", dict(d_model=seq, d_proj=d, seq_len=seq),
                         comment="context: probabilities times V"))
        out.append(layer("attention_proj", dict(d_model=d, d_proj=d, seq_len=seq),
                         [("add", seq * d), ("layernorm", seq * d)]))
        out.append(layer("attention_proj", dict(d_model=d, d_proj=ffn, seq_len=seq), [("gelu", seq * ffn)]))
        out.append(layer("attention_proj", dict(d_model=ffn, d_proj=d, seq_len=seq),
                         [("add", seq * d), ("layernorm", seq * d)]))
    return "\n\n".join(out) + "\n"


def rnnt():
    out = ['name = "rnnt"']
    out.append(layer("lstm_cell", dict(hidden=1024, input=240, seq_len=64), comment="encoder, pre-stack"))
    out.append(layer("lstm_cell", dict(hidden=1024, input=1024, seq_len=64)))
    out.append(layer("lstm_cell", dict(hidden=1024, input=2048, seq_len=32), comment="encoder, after 2x time stacking"))
    out.append(layer("lstm_cell", dict(hidden=1024, input=1024, seq_len=32)))
    out.append(layer("lstm_cell", dict(hidden=1024, input=1024, seq_len=32)))
    out.append(layer("lstm_cell", dict(hidden=320, input=320, seq_len=16), comment="prediction network"))
    out.append(layer("lstm_cell", dict(hidden=320, input=320, seq_len=16)))
    out.append(layer("attention_proj", dict(d_model=1344, d_proj=512, seq_len=48), [("relu", 48 * 512)],
                     "joint network over T + U greedy decode steps"))
    out.append(layer("attention_proj", dict(d_model=512, d_proj=29, seq_len=48), [("softmax", 48 * 29)]))
    return "\n\n".join(out) + "\n"


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    for name, text in [("resnet50", resnet50()), ("bertlarge", bert_large()), ("rnnt", rnnt())]:
        (OUT / f"{name}.workload").write_text(text)
