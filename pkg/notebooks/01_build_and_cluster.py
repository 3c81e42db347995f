# %% [markdown]
# # Building and clustering the demo knowledge graph
#
# Turn the bundled markdown corpus into a validated graph, embed every
# entity and cluster the result into layers.

# %%
import sys
import tempfile
from collections import Counter
from pathlib import Path

from amkg import workflow
from amkg.config import load_config
from amkg.data import corpus_dir
from amkg.ontology import EntityKind

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="amkg_demo_"))
cfg = load_config()
backend = workflow.backend_from_config(cfg)   # recorded responses, no network needed

# %% [markdown]
# ## Extraction and validation
#
# Every chunk is sent through the entity and relation prompts. Whatever breaks
# an ontology rule is dropped and listed in the validation report.

# %%
result = workflow.run_build(corpus_dir(), out, cfg, backend)
print(f"{len(result.chunks)} chunks -> {len(result.graph.entities)} entities, "
      f"{len(result.graph.relations)} relations")
print("clean after post-processing:", result.clean)
print("removed:", result.removed.rules() or "nothing")
print(Counter(e.kind.value for e in result.graph.entities.values()).most_common())

# %%
for e in result.graph.by_kind(EntityKind.EQUATION):
    print(f"{e.name:40s} {e.latex}")

# %% [markdown]
# ## Embeddings
#
# Equations carry a formula segment next to their text segment, so their
# vectors are longer than those of plain entities.

# %%
import numpy as np

emb = workflow.run_embed(out, cfg)
norms = Counter(round(float(np.linalg.norm(v)), 6) for v in emb.values())
print("vector norms:", dict(norms))

# %% [markdown]
# ## Hierarchy
#
# Layer 1 starts from equation-centric groups; the rest of the graph is
# grouped by modularity over relation and similarity edges.

# %%
h = workflow.run_cluster(out, cfg, backend)
for n, layer in enumerate(h.layers, 1):
    kinds = Counter(c.kind for c in layer)
    print(f"layer {n}: {len(layer)} clusters {dict(kinds)}")
for c in h.layers[0][:5]:
    print(f"  {c.id}: {len(c.members)} members | {c.summary[:70]}")
print("artifacts in", out)
