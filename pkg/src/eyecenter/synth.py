"""Synthetic frames with known eye centres, for desk-scale verification.

Frames are 384x286 (the BioID frame size) with a skin-toned ground, two
eyes (sclera ellipse, dark iris disk, darker pupil cluster), eyebrows,
optional eyelid occlusion and salt-and-pepper noise. Each frame comes with
a BioID-style ``.eye`` file and a line in a provided-regions manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imagecore import Rect, write_pgm
from .pipeline import format_regions_line

FRAME_W, FRAME_H = 384, 286
REGION_W, REGION_H = 60, 52


@dataclass(frozen=True)
class SynthEye:
    cx: int
    cy: int
    iris_r: int
    region: Rect


def _disk(xs, ys, cx, cy, r):
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r


def _draw_eye(img, xs, ys, rng, cx, cy, r, occlusion, skin):
    a, b = rng.uniform(23, 26), rng.uniform(12, 14)
    sclera = ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1
    img[sclera] = rng.uniform(215, 235)
    img[_disk(xs, ys, cx, cy, r + 0.5)] = rng.uniform(70, 95)
    img[_disk(xs, ys, cx, cy, max(2.5, 0.3 * r))] = rng.uniform(15, 35)
    if occlusion > 0:
        # upper eyelid: skin cap hiding up to `occlusion` of the iris outline
        frac = rng.uniform(0, occlusion)
        cut = cy - r * np.cos(np.pi * frac)
        lid = (ys < cut) & (np.abs(xs - cx) <= a) & (ys >= cy - r - 3)
        img[lid] = skin
    # eyebrow band above the eye
    by = cy - rng.integers(24, 27)
    brow = (np.abs(ys - by) <= 2.5) & (np.abs(xs - cx) <= 22)
    img[brow] = rng.uniform(50, 80)


def synth_frame(rng: np.random.Generator, noise: float = 0.002, occlusion: float = 0.25):
    """Return (frame, left SynthEye, right SynthEye); left/right by image x."""
    ys, xs = np.mgrid[0:FRAME_H, 0:FRAME_W].astype(np.float64)
    skin = rng.uniform(135, 165)
    img = np.full(xs.shape, skin)
    dist = int(rng.integers(90, 121))
    mx = FRAME_W // 2 + int(rng.integers(-15, 16))
    my = 120 + int(rng.integers(-10, 11))
    tilt = int(rng.integers(-3, 4))
    eyes = []
    for k, sign in enumerate((-1, 1)):
        cx = mx + sign * (dist // 2)
        cy = my + sign * tilt
        r = int(rng.integers(11, 15))
        _draw_eye(img, xs, ys, rng, cx, cy, r, occlusion, skin)
        rx = cx - REGION_W // 2 + int(rng.integers(-6, 7))
        ry = cy - int(round(0.6 * REGION_H)) + int(rng.integers(-3, 4))
        eyes.append(SynthEye(cx, cy, r, Rect(rx, ry, REGION_W, REGION_H)))
    img += rng.normal(0, 1.5, img.shape)
    if noise > 0:
        flip = rng.random(img.shape) < noise
        img[flip] = rng.choice([0.0, 255.0], size=int(flip.sum()))
    frame = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    return frame, eyes[0], eyes[1]


def eye_file_text(left: tuple[int, int], right: tuple[int, int]) -> str:
    # BioID convention: LX/LY is the subject's left eye, i.e. the image-right one
    return f"#LX\tLY\tRX\tRY\n{right[0]}\t{right[1]}\t{left[0]}\t{left[1]}\n"


def write_corpus(out_dir, count: int, seed: int = 0, noise: float = 0.002,
                 occlusion: float = 0.25, manifest: str = "regions.txt") -> list[str]:
    """Write ``count`` frames + .eye files + a regions manifest; returns frame names."""
    os.makedirs(out_dir, exist_ok=True)
    seeds = np.random.SeedSequence(seed).spawn(count)
    names, lines = [], []
    for i, ss in enumerate(seeds):
        frame, left, right = synth_frame(np.random.default_rng(ss), noise, occlusion)
        name = f"synth_{i:04d}.pgm"
        write_pgm(os.path.join(out_dir, name), frame)
        with open(os.path.join(out_dir, name[:-4] + ".eye"), "w") as f:
            f.write(eye_file_text((left.cx, left.cy), (right.cx, right.cy)))
        names.append(name)
        lines.append(format_regions_line(name, left.region, right.region))
    with open(os.path.join(out_dir, manifest), "w") as f:
        f.write("# filename x_l y_l w_l h_l x_r y_r w_r h_r\n")
        f.writelines(line + "\n" for line in lines)
    return names


def write_adversarial_corpus(out_dir, manifest: str = "regions.txt") -> list[str]:
    """Blank, all-dark and 4x4 frames that must all end in region-centre fallbacks."""
    os.makedirs(out_dir, exist_ok=True)
    big_l, big_r = Rect(110, 85, REGION_W, REGION_H), Rect(210, 85, REGION_W, REGION_H)
    cases = [
        ("blank_bright", np.full((FRAME_H, FRAME_W), 200, np.uint8), big_l, big_r, (142, 119), (242, 119)),
        ("blank_white", np.full((FRAME_H, FRAME_W), 255, np.uint8), big_l, big_r, (142, 119), (242, 119)),
        ("all_dark", np.zeros((FRAME_H, FRAME_W), np.uint8), big_l, big_r, (142, 119), (242, 119)),
        ("tiny_flat", np.full((4, 4), 90, np.uint8), Rect(0, 0, 2, 4), Rect(2, 0, 2, 4), (1, 2), (3, 2)),
        ("tiny_dark", np.zeros((4, 4), np.uint8), Rect(0, 0, 2, 4), Rect(2, 0, 2, 4), (1, 2), (3, 2)),
        ("tiny_ramp", np.arange(16, dtype=np.uint8).reshape(4, 4) * 16, Rect(0, 0, 2, 4), Rect(2, 0, 2, 4),
         (0, 1), (3, 1)),
    ]
    lines = []
    for name, img, rl, rr, gl, gr in cases:
        write_pgm(os.path.join(out_dir, name + ".pgm"), img)
        with open(os.path.join(out_dir, name + ".eye"), "w") as f:
            f.write(eye_file_text(gl, gr))
        lines.append(format_regions_line(name + ".pgm", rl, rr))
    with open(os.path.join(out_dir, manifest), "w") as f:
        f.writelines(line + "\n" for line in lines)
    return [c[0] + ".pgm" for c in cases]


def noisy_disk(rng: np.random.Generator, size: int = 64, flip_frac: float = 0.05,
               occlusion: float = 0.25):
    """Binary mask (1 = bright) with one dark disk, partly occluded and noisy.

    Returns (mask, (cx, cy, r)) with real-valued truth. Occlusion hides a cap holding up to
    ``occlusion`` of the circle outline; ``flip_frac`` of pixels are flipped.
    """
    r = float(rng.uniform(8, 15))
    cx = float(rng.uniform(r + 4, size - r - 4))
    cy = float(rng.uniform(r + 4, size - r - 4))
    ys, xs = np.mgrid[0:size, 0:size]
    dark = np.hypot(xs - cx, ys - cy) <= r
    frac = rng.uniform(0, occlusion)
    if frac > 0:
        ang = rng.uniform(0, 2 * np.pi)
        ux, uy = np.cos(ang), np.sin(ang)
        # cap beyond the chord at distance r cos(pi frac) along direction u
        cap = (xs - cx) * ux + (ys - cy) * uy > r * np.cos(np.pi * frac)
        dark &= ~cap
    mask = (~dark).astype(np.uint8)
    flips = rng.random(mask.shape) < rng.uniform(0, flip_frac)
    mask[flips] ^= 1
    return mask, (cx, cy, r)
