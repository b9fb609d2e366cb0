"""
The SSD300 anchor grid
======================

Build the 8732-anchor set, look at one cell of every feature map, and
compare parameter counts of the shared-head, forked-head and fully
replicated detectors.
"""

import numpy as np

from boxforge import canonical_spec, count_parameters, generate_anchors

spec = canonical_spec()
anchors = generate_anchors(spec)
print(f"K = {spec.K} anchors over {spec.F} feature maps")

# Each map contributes k * g * g anchors, stored in one contiguous block.
for i in range(spec.F):
    block = anchors.layer(i)
    print(f"map {i + 1}: {spec.g[i]:>2}x{spec.g[i]:<2} cells, {spec.k[i]} shapes -> {len(block)} anchors")

# The single 1x1 map holds four boxes centred on the page.
last = anchors.layer(spec.F - 1)
print(np.round(last, 3))

# Only the detection heads are replicated in the forked model, so it costs
# far less than running four copies of the whole network.
for head in ("baseline", "fork", "naive_replication"):
    print(f"{head:<18} {count_parameters(spec, head) / 1e6:5.1f} M parameters")
