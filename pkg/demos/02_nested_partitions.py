"""Eight labelled balls falling through a PD(1) cascade, generation by generation."""
from cascade_occupancy.partitions import is_refinement, partition_from_cascade

seq = partition_from_cascade("pd1", 8, 6, seed=3)
for k, pi in enumerate(seq.partitions):
    print(f"k={k}  {len(pi):2d} blocks  {pi}")
print("nested:", all(is_refinement(seq[k + 1], seq[k]) for k in range(6)))
