"""Memorize uniformly random labels with an overparameterized MLP.

128 images, 10 classes, labels replaced by coin flips: there is nothing
to generalize, yet a 512-wide two-layer network drives training accuracy
from chance (0.1) to 1.0 in a few dozen epochs. Writes the learning
curve to memorize.svg next to this script.
"""

import os

from memlab import TrainConfig, emit_svg, pretrain_random, synth_images

d = synth_images(128, 10, seed=100)
cfg = TrainConfig(epochs=40, initial_lr=0.01, batch_size=32, seed=0,
                  monitor="train_loss")

ckpt, log = pretrain_random(d, "flatten dense:512 relu dense:512 relu",
                            cfg, label_seed=1000)

print("epoch  train_loss  train_acc")
for rec in log.rows(split="train"):
    if rec.epoch % 5 == 0 or rec.accuracy == 1.0:
        print(f"{rec.epoch:>5}  {rec.loss:>10.4f}  {rec.accuracy:>9.3f}")
        if rec.accuracy == 1.0:
            break

out = os.path.join(os.path.dirname(__file__), "memorize.svg")
emit_svg(log, out)
print(f"curve written to {out}")
