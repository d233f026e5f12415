"""Builtin benchmark graphs: ResNet8, ResNet18 (CIFAR-10) and a YOLOv8n subset.

Activations are fused into the producing Conv/Mvm node, batch-norm is folded
into conv biases, and the ReLU that follows a residual add is part of the Add
node. Convolutions use "same" padding, so a stride-s layer maps an HxH input
to (H/s)x(H/s).

ResNet8 layer list (MLPerf Tiny topology, CIFAR-10, 32x32 input)::

    1  conv3x3  3->16  +ReLU        8  add(5, 7)
    2  conv3x3 16->16  +ReLU        9  shortcut conv1x1 32->64 /2
    3  conv3x3 16->16              10  conv3x3 32->64 /2 +ReLU
    4  add(1, 3)                   11  conv3x3 64->64
    5  shortcut conv1x1 16->32 /2  12  add(9, 11)
    6  conv3x3 16->32 /2 +ReLU     13  global avgpool
    7  conv3x3 32->32              14  dense 64->10 (Mvm)

The dense classifier is the tenth IMC-class node. ResNet18 uses the same
block layout at half the standard width (32/64/128/256 channels), which
gives 2.80M parameters; downsampling blocks list the 1x1 shortcut first.
"""

from __future__ import annotations

from functools import lru_cache

from .errors import ConfigError
from .graph import Act, ModelGraph, NodeSpec, Op

BUILTIN_MODELS = ("resnet8", "resnet18", "yolov8n_subset")


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.nodes: list[NodeSpec] = []
        self.edges: list[tuple[int, int]] = []

    def add(self, name, op, preds=(), macs=0, out_elems=1, weights=0, act=None) -> int:
        nid = len(self.nodes) + 1
        self.nodes.append(NodeSpec(nid, name, op, macs, out_elems, weights, act))
        self.edges.extend((p, nid) for p in preds)
        return nid

    def conv(self, name, pred, cin, cout, hw, k=3, stride=1, act=None) -> tuple[int, int]:
        """Add a conv fed by `pred` at spatial size `hw`; returns (id, output hw)."""
        out = hw // stride
        nid = self.add(
            name,
            Op.CONV,
            () if pred is None else (pred,),
            macs=k * k * cin * cout * out * out,
            out_elems=cout * out * out,
            weights=k * k * cin * cout + cout,
            act=act,
        )
        return nid, out

    def dense(self, name, pred, cin, cout) -> int:
        return self.add(name, Op.MVM, (pred,), macs=cin * cout, out_elems=cout, weights=cin * cout + cout)

    def graph(self) -> ModelGraph:
        return ModelGraph(tuple(self.nodes), tuple(self.edges), self.name)


def _basic_block(b: _Builder, tag: str, x: int, cin: int, cout: int, hw: int, stride: int):
    if stride != 1 or cin != cout:
        sc, _ = b.conv(f"{tag}.shortcut", x, cin, cout, hw, k=1, stride=stride)
    else:
        sc = x
    c1, hw = b.conv(f"{tag}.conv1", x, cin, cout, hw, stride=stride, act=Act.RELU)
    c2, hw = b.conv(f"{tag}.conv2", c1, cout, cout, hw)
    out = b.add(f"{tag}.add", Op.ADD, (sc, c2), out_elems=cout * hw * hw)
    return out, hw


def resnet8() -> ModelGraph:
    b = _Builder("resnet8")
    x, hw = b.conv("stem", None, 3, 16, 32, act=Act.RELU)
    cin = 16
    for i, (cout, stride) in enumerate([(16, 1), (32, 2), (64, 2)], start=1):
        x, hw = _basic_block(b, f"stack{i}", x, cin, cout, hw, stride)
        cin = cout
    pool = b.add("avgpool", Op.AVGPOOL, (x,), out_elems=cin)
    b.dense("fc", pool, cin, 10)
    return b.graph()


def resnet18() -> ModelGraph:
    b = _Builder("resnet18")
    x, hw = b.conv("stem", None, 3, 32, 32, act=Act.RELU)
    cin = 32
    for i, (cout, stride) in enumerate([(32, 1), (64, 2), (128, 2), (256, 2)], start=1):
        x, hw = _basic_block(b, f"layer{i}.0", x, cin, cout, hw, stride)
        x, hw = _basic_block(b, f"layer{i}.1", x, cout, cout, hw, 1)
        cin = cout
    pool = b.add("avgpool", Op.AVGPOOL, (x,), out_elems=cin)
    b.dense("fc", pool, cin, 10)
    return b.graph()


# --- YOLOv8n ---------------------------------------------------------------


def _c2f(b: _Builder, tag: str, x: int, cin: int, cout: int, hw: int, n: int, shortcut: bool) -> int:
    hidden = cout // 2
    cv1, _ = b.conv(f"{tag}.cv1", x, cin, 2 * hidden, hw, k=1, act=Act.SILU)
    split = b.add(f"{tag}.split", Op.SPLIT, (cv1,), out_elems=2 * hidden * hw * hw)
    parts = [split]
    y = split
    for i in range(n):
        m1, _ = b.conv(f"{tag}.m{i}.cv1", y, hidden, hidden, hw, act=Act.SILU)
        m2, _ = b.conv(f"{tag}.m{i}.cv2", m1, hidden, hidden, hw, act=Act.SILU)
        y = b.add(f"{tag}.m{i}.add", Op.ADD, (y, m2), out_elems=hidden * hw * hw) if shortcut else m2
        parts.append(y)
    cat = b.add(f"{tag}.concat", Op.CONCAT, parts, out_elems=(2 + n) * hidden * hw * hw)
    out, _ = b.conv(f"{tag}.cv2", cat, (2 + n) * hidden, cout, hw, k=1, act=Act.SILU)
    return out


def _sppf(b: _Builder, tag: str, x: int, cin: int, cout: int, hw: int) -> int:
    hidden = cin // 2
    cv1, _ = b.conv(f"{tag}.cv1", x, cin, hidden, hw, k=1, act=Act.SILU)
    pools = [cv1]
    for i in range(3):
        pools.append(b.add(f"{tag}.maxpool{i}", Op.MAXPOOL, (pools[-1],), out_elems=hidden * hw * hw))
    cat = b.add(f"{tag}.concat", Op.CONCAT, pools, out_elems=4 * hidden * hw * hw)
    out, _ = b.conv(f"{tag}.cv2", cat, 4 * hidden, cout, hw, k=1, act=Act.SILU)
    return out


def _decode(b: _Builder, tag: str, head: int, hw: int, reg_max: int, nc: int) -> int:
    """Post-processing for one detection scale: box distribution and class scores."""
    cells = hw * hw
    r = b.add(f"{tag}.reshape", Op.RESHAPE, (head,), out_elems=(4 * reg_max + nc) * cells)
    sp = b.add(f"{tag}.split", Op.SPLIT, (r,), out_elems=(4 * reg_max + nc) * cells)
    sides = []
    for s in range(4):
        y = sp
        for j in range(9):
            kind = Op.ACTIVATION if j % 3 == 1 else Op.RESHAPE
            y = b.add(f"{tag}.side{s}.{j}", kind, (y,), out_elems=(reg_max if j < 3 else 1) * cells)
        sides.append(y)
    box = b.add(f"{tag}.box", Op.CONCAT, sides, out_elems=4 * cells)
    y = sp
    for j in range(4):
        kind = Op.ACTIVATION if j % 2 == 0 else Op.RESHAPE
        y = b.add(f"{tag}.cls.{j}", kind, (y,), out_elems=nc * cells)
    return b.add(f"{tag}.out", Op.CONCAT, (box, y), out_elems=(4 + nc) * cells)


def yolov8n_subset() -> ModelGraph:
    """YOLOv8n at 640x640: backbone, PAN neck, three-scale detect head, decode.

    The detect head at each scale has two 3-conv branches (box, class); the
    neck continues from P3 and P4 through 5 convs each. Channel widths follow
    the n-scale (0.25 width, 0.33 depth) configuration with 80 classes.
    """
    b = _Builder("yolov8n_subset")
    silu = Act.SILU
    x, hw = b.conv("b0", None, 3, 16, 640, stride=2, act=silu)
    x, hw = b.conv("b1", x, 16, 32, hw, stride=2, act=silu)
    x = _c2f(b, "b2", x, 32, 32, hw, 1, True)
    x, hw = b.conv("b3", x, 32, 64, hw, stride=2, act=silu)
    p3_in = _c2f(b, "b4", x, 64, 64, hw, 2, True)
    x, hw = b.conv("b5", p3_in, 64, 128, hw, stride=2, act=silu)
    p4_in = _c2f(b, "b6", x, 128, 128, hw, 2, True)
    x, hw = b.conv("b7", p4_in, 128, 256, hw, stride=2, act=silu)
    x = _c2f(b, "b8", x, 256, 256, hw, 1, True)
    p5_in = _sppf(b, "b9", x, 256, 256, hw)  # 20x20

    up = b.add("n10.upsample", Op.RESHAPE, (p5_in,), out_elems=256 * 40 * 40)
    cat = b.add("n11.concat", Op.CONCAT, (up, p4_in), out_elems=384 * 40 * 40)
    n12 = _c2f(b, "n12", cat, 384, 128, 40, 1, False)
    up = b.add("n13.upsample", Op.RESHAPE, (n12,), out_elems=128 * 80 * 80)
    cat = b.add("n14.concat", Op.CONCAT, (up, p3_in), out_elems=192 * 80 * 80)
    p3 = _c2f(b, "n15", cat, 192, 64, 80, 1, False)
    x, _ = b.conv("n16", p3, 64, 64, 80, stride=2, act=silu)
    cat = b.add("n17.concat", Op.CONCAT, (x, n12), out_elems=192 * 40 * 40)
    p4 = _c2f(b, "n18", cat, 192, 128, 40, 1, False)
    x, _ = b.conv("n19", p4, 128, 128, 40, stride=2, act=silu)
    cat = b.add("n20.concat", Op.CONCAT, (x, p5_in), out_elems=384 * 20 * 20)
    p5 = _c2f(b, "n21", cat, 384, 256, 20, 1, False)

    reg_max, nc = 16, 80
    c2, c3 = 64, 80
    outs = []
    for i, (feat, ch, hw) in enumerate([(p3, 64, 80), (p4, 128, 40), (p5, 256, 20)]):
        y, _ = b.conv(f"d{i}.box.0", feat, ch, c2, hw, act=silu)
        y, _ = b.conv(f"d{i}.box.1", y, c2, c2, hw, act=silu)
        box, _ = b.conv(f"d{i}.box.2", y, c2, 4 * reg_max, hw, k=1)
        y, _ = b.conv(f"d{i}.cls.0", feat, ch, c3, hw, act=silu)
        y, _ = b.conv(f"d{i}.cls.1", y, c3, c3, hw, act=silu)
        cls, _ = b.conv(f"d{i}.cls.2", y, c3, nc, hw, k=1)
        head = b.add(f"d{i}.concat", Op.CONCAT, (box, cls), out_elems=(4 * reg_max + nc) * hw * hw)
        outs.append(_decode(b, f"decode{i}", head, hw, reg_max, nc))
    anchors = sum(hw * hw for hw in (80, 40, 20))
    cat = b.add("out.concat", Op.CONCAT, outs, out_elems=(4 + nc) * anchors)
    y = b.add("out.reshape", Op.RESHAPE, (cat,), out_elems=(4 + nc) * anchors)
    b.add("out.activation", Op.ACTIVATION, (y,), out_elems=(4 + nc) * anchors)
    return b.graph()


_GENERATORS = {"resnet8": resnet8, "resnet18": resnet18, "yolov8n_subset": yolov8n_subset}


@lru_cache(maxsize=None)
def builtin_model(name: str) -> ModelGraph:
    try:
        return _GENERATORS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin model '{name}' (expected one of {', '.join(BUILTIN_MODELS)})") from None
