"""Reshuffle the random labels and memorize again, three times over.

After each round the labels are replaced by a fresh independent draw, so
measured accuracy instantly falls back to chance. The interesting part
is the speed: having memorized one random labeling, the network reaches
0.9 training accuracy on the next one in noticeably fewer epochs.
Weights persist across rounds; the optimizer and learning rate restart.
"""

import os

from memlab import (TrainConfig, emit_svg, epochs_to_threshold,
                    reshuffle_experiment, synth_images)

d = synth_images(128, 10, seed=100)
cfg = TrainConfig(epochs=150, initial_lr=0.01, batch_size=32, seed=0,
                  monitor="train_loss")

ckpt, log = reshuffle_experiment(d, "flatten dense:512 relu dense:512 relu",
                                 cfg, rounds=3, epochs_per_round=150,
                                 base_seed=7)

print("round  start_acc  epochs_to_0.9")
for r in log.rounds():
    hit = epochs_to_threshold(log, r, 0.9)
    print(f"{r:>5}  {log.round_start_accuracy[r]:>9.3f}  "
          f"{hit if hit is not None else '-':>13}")

out = os.path.join(os.path.dirname(__file__), "reshuffle.svg")
emit_svg(log, out)
print(f"curves written to {out}")
