"""Deterministic rendered test clips: flat-color objects on black."""

import numpy as np
from PIL import Image

RED = (200, 40, 40)
GREEN = (40, 180, 60)
BLUE = (50, 80, 210)

WIDTH = 96
HEIGHT = 96
NUM_FRAMES = 24

APPLE = (16, 24, 20, 20)  # x, y, w, h; static
BOWL = (64, 10, 14, 14)
FRAG_START_FRAME = 10
FRAG0 = (38, 28, 10, 10)  # spawns 2 px right of the apple, drifts right


def rect(frame, xywh, color):
    x, y, w, h = xywh
    frame[y : y + h, x : x + w] = color


def render_clip(out_dir, num_frames=NUM_FRAMES, frag_vanish_frame=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(num_frames):
        frame = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
        rect(frame, APPLE, RED)
        rect(frame, BOWL, GREEN)
        frag_visible = t >= FRAG_START_FRAME and (
            frag_vanish_frame is None or t < frag_vanish_frame
        )
        if frag_visible:
            x, y, w, h = FRAG0
            rect(frame, (x + (t - FRAG_START_FRAME), y, w, h), RED)
        Image.fromarray(frame).save(out_dir / f"{t:06d}.png")
    return out_dir


def rect_mask(xywh, width=WIDTH, height=HEIGHT):
    x, y, w, h = xywh
    mask = np.zeros((height, width), dtype=bool)
    mask[y : y + h, x : x + w] = True
    return mask


def prompt_mask():
    return rect_mask(APPLE)
