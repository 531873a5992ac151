#!/usr/bin/env python3
"""Frame features: what the DCT front end sees.

Generates a short procedural clip, extracts per-frame features, and pokes
at the properties that make low-frequency DCT coefficients good
fingerprint material: insensitivity to brightness shifts, sensitivity to
content changes, and a compact energy footprint.
"""

import numpy as np

from evhash import dct_features, downscale_gray64, extract_features
from evhash.bench import synth_video

clip = synth_video(seed=42, duration_s=8)
print(f"clip: {len(clip.frames)} frames @ {clip.fps} fps")

feats = extract_features(clip, video_id="demo")
print(f"features: M={feats.M} rows (alternate frames dropped), D={feats.D}")

# A constant brightness shift moves only the DC coefficient, and the DC
# coefficient is zeroed: the feature vector barely moves.
frame = clip.frames[0]
shifted = np.clip(frame.astype(int) + 30, 0, 255).astype(np.uint8)
base = dct_features(frame)
delta = np.linalg.norm(dct_features(shifted) - base)
print(f"\n+30 brightness shift moves the feature vector by {delta:.4f}")

# Content changes move it a lot.
other = clip.frames[-1]
delta_content = np.linalg.norm(dct_features(other) - base)
print(f"a different frame moves it by {delta_content:.4f}")

# Energy compaction: the kept 32x32 low-frequency block holds almost all
# of the frame's (non-DC) energy.
full = np.linalg.norm(frame / 255.0 - np.mean(frame / 255.0)) ** 2
kept = np.sum(base ** 2)
print(f"\nkept low-frequency energy: {kept:.3f} of {full:.3f} "
      f"({100 * kept / full:.1f}%)")

# Downscaling an upscaled frame is nearly lossless for smooth content.
big = np.repeat(np.repeat(frame, 2, axis=0), 2, axis=1)
back = downscale_gray64(big)
print(f"2x upscale -> downscale: max pixel error "
      f"{np.max(np.abs(back.astype(int) - frame.astype(int)))}")
