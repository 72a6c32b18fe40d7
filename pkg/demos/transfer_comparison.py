"""Does memorizing random labels help a later real task? Paired test.

Pretrains on 10000 images of corpus A with random labels, fine-tunes on
a 200-image training split of corpus B with true labels, and compares
against training from scratch. Within each pair everything except
initialization is shared: same seed, same data order (certified by
fingerprints). Two seeds here to keep the run short; the library API
takes as many as you like.
"""

from memlab import TrainConfig, compare_transfer, synth_images

source = synth_images(10000, 30, seed=500)
target = synth_images(1000, 30, seed=600)

pre_cfg = TrainConfig(epochs=16, initial_lr=0.03, batch_size=32,
                      monitor="train_loss")
ft_cfg = TrainConfig(epochs=40, initial_lr=0.003, batch_size=32,
                     monitor="val_accuracy")

report = compare_transfer(source, target, "flatten dense:256 relu dense:256 relu",
                          pre_cfg, ft_cfg, seeds=[0, 1], train_fraction=0.2)

print("seed  baseline  pretrained  difference")
for s, b, p in zip(report.seeds, report.baseline, report.pretrained):
    print(f"{s:>4}  {b:>8.3f}  {p:>10.3f}  {p - b:>+10.3f}")
print(f"mean difference {report.mean_difference:+.4f}, "
      f"{report.wins}/{len(report.seeds)} seeds improved")
