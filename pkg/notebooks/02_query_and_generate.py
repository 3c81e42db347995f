# %% [markdown]
# # Retrieval and candidate generation
#
# Ask for equations linking exposure energy ``E`` to cure depth ``C_d``.
# The retrieved subgraph bounds the symbols any candidate may use.

# %%
import sys
import tempfile
from pathlib import Path

from amkg import workflow
from amkg.config import load_config
from amkg.data import corpus_dir

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="amkg_demo_"))
cfg = load_config()
backend = workflow.backend_from_config(cfg)
workflow.run_build(corpus_dir(), out, cfg, backend)
workflow.run_embed(out, cfg)
workflow.run_cluster(out, cfg, backend)

# %% [markdown]
# ## Subgraph

# %%
sg = workflow.run_query(out, cfg, ["E"], "C_d")
print(f"{len(sg.entities)} entities, {len(sg.relations)} relations")
print("symbols:", sorted(sg.symbols()))
for e in sg.equations():
    print(f"  [{sg.roles.get(e.uri, '-')}] {e.latex}")

# %% [markdown]
# ## Candidates
#
# Candidates that reference a symbol outside the subgraph are rejected
# rather than repaired.

# %%
cands, rejected = workflow.run_generate(out, cfg, backend, ["E"], "C_d", subgraph=sg)
for c in cands:
    print(f"{c.latex}   parameters={c.parameters}")
for r in rejected:
    print("rejected:", r.latex, "|", r.reason)
