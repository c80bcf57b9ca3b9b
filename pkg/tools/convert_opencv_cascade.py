#!/usr/bin/env python3
"""Rewrite an OpenCV >= 2.4 "opencv-cascade-classifier" Haar file in the
legacy "opencv-haar-classifier" layout read by ``eyecenter.cascade``.

Only stump-based, upright-feature BOOST/HAAR cascades are accepted. The
license comment at the top of the source file is carried over verbatim.

Usage:
    python tools/convert_opencv_cascade.py SRC.xml DST.xml [--name NAME]
"""

import argparse
import re
import sys
import xml.etree.ElementTree as ET


def _floats(text):
    return [float(t) for t in text.split()]


def convert(src_text, name):
    comment = re.search(r"<!--(.*?)-->", src_text, re.S)
    root = ET.fromstring(src_text.encode())
    casc = root.find("cascade")
    if casc is None or casc.findtext("featureType").strip() != "HAAR":
        raise ValueError("not a HAAR cascade in opencv-cascade-classifier layout")
    w = int(casc.findtext("width"))
    h = int(casc.findtext("height"))

    features = []
    for feat in casc.find("features"):
        rects = [r.text.split() for r in feat.find("rects")]
        tilted = (feat.findtext("tilted") or "0").strip()
        if tilted != "0":
            raise ValueError("tilted features are not supported")
        features.append(rects)

    out = ['<?xml version="1.0"?>']
    if comment:
        out.append("<!--" + comment.group(1) + "-->")
    out.append("<opencv_storage>")
    out.append(f'<{name} type_id="opencv-haar-classifier">')
    out.append(f"  <size>{w} {h}</size>")
    out.append("  <stages>")
    for si, stage in enumerate(casc.find("stages")):
        out.append("    <_>")
        out.append(f"      <!-- stage {si} -->")
        out.append("      <trees>")
        for ti, weak in enumerate(stage.find("weakClassifiers")):
            nodes = weak.findtext("internalNodes").split()
            leaves = _floats(weak.findtext("leafValues"))
            if len(nodes) != 4 or len(leaves) != 2:
                raise ValueError(f"stage {si} tree {ti}: not a stump")
            feat = features[int(nodes[2])]
            out.append("        <_>")
            out.append(f"          <!-- tree {ti} -->")
            out.append("          <_>")
            out.append("            <feature>")
            out.append("              <rects>")
            for r in feat:
                x, y, rw, rh, wt = r
                out.append(f"                <_>{x} {y} {rw} {rh} {wt}</_>")
            out.append("              </rects>")
            out.append("              <tilted>0</tilted></feature>")
            out.append(f"            <threshold>{nodes[3]}</threshold>")
            out.append(f"            <left_val>{leaves[0]!r}</left_val>")
            out.append(f"            <right_val>{leaves[1]!r}</right_val></_></_>")
        out.append("      </trees>")
        out.append(f"      <stage_threshold>{stage.findtext('stageThreshold').strip()}</stage_threshold>")
        out.append(f"      <parent>{si - 1}</parent>")
        out.append("      <next>-1</next></_>")
    out.append("  </stages>")
    out.append(f"</{name}>")
    out.append("</opencv_storage>")
    return "\n".join(out) + "\n"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--name", default=None)
    args = ap.parse_args(argv)
    with open(args.src, encoding="utf-8") as f:
        text = f.read()
    name = args.name or re.sub(r"\W", "_", args.dst.rsplit("/", 1)[-1].rsplit(".", 1)[0])
    with open(args.dst, "w", encoding="utf-8") as f:
        f.write(convert(text, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
