#!/usr/bin/env python3
"""The adjacent-Hamming profile: where events come from.

A video is a sequence of shots; between shots the encoder's binary codes
flip many bits at once, inside a shot they barely move. The profile of
d_t = Hamming(code_{t+1}, code_t) makes that visible, and the event
detector turns its spikes into hash boundaries. Writes the profile to
event_profile.csv (step, d_t, is_event_end) for plotting.
"""

from evhash import build_model, compute_norm_stats, encode, normalize
from evhash.bench import synth_video
from evhash.hashing import EventDetectConfig, hash_video, write_d_series_csv
from evhash.ingest import extract_features

clip = synth_video(seed=7, duration_s=30)  # several shots long
feats = extract_features(clip, "clip")
stats = compute_norm_stats([feats])
model = build_model(D=1024, L=64, encoder_dims=(32, 32, 16), seed=2)

enc = encode(normalize(feats, stats), model)
detect = EventDetectConfig()  # 16-bit hard threshold, trailing window 8

profile = "".join(
    "#" if d >= detect.hard_threshold else "+" if d >= 4 else "."
    for d in enc.d_series)
print(f"{enc.M_e} encoder steps, d_t profile (.< 4 bits, + < 16, # >= 16):")
print(f"  {profile}")

vh = hash_video(enc, "events", detect, video_id="clip",
                duration_seconds=clip.duration_seconds)
print(f"\nevents end at steps {vh.end_steps.tolist()}")
print(f"{vh.E} events x {vh.L} bits = {vh.E * vh.L} hash bits "
      f"for {clip.duration_seconds:.0f} s of video")

write_d_series_csv(enc, "event_profile.csv", detect)
print("wrote event_profile.csv")
