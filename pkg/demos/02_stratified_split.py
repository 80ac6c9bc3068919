"""
Length-stratified 9:1 split
===========================

Segments are grouped by source length and each group is split on its own,
so the test set has the same length profile as the training set.
"""

from collections import Counter

from mtpe.corpus import corpus_stats, label_corpus
from mtpe.splitter import SubsamplePlan, stratified_split, subsample_train, verify_distribution
from mtpe.synthetic import synthetic_units

segments = label_corpus(synthetic_units(842, seed=842))
stats = corpus_stats(segments)
print(f"{stats.n_units} segments, {stats.edit_count} EDIT / {stats.keep_count} KEEP, "
      f"mean source length {stats.mean_source_length:.1f}")

split = stratified_split(segments, ratio=0.9, seed=3)
by_id = {s.id: s for s in segments}
for check in verify_distribution(split, segments):
    print(f"bucket {str(check.bucket):>6}: {check.train_count:>4} train  {check.test_count:>3} test"
          + ("  <-- off" if check.flagged else ""))

# the same seed always gives the same split
assert stratified_split(segments, 0.9, seed=3) == split

# nested training subsets for a learning curve; each keeps the bucket mix
for size, ids in subsample_train(split, SubsamplePlan((200, 400, 600), seed=1), segments):
    mix = Counter(str(by_id[i].length_bucket) for i in ids)
    print(f"subset of {size}: " + ", ".join(f"{b} {mix[b]}" for b in ("1-5", "6-10", "11-20", "21-40", "41-")))
