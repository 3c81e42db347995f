# %% [markdown]
# # Fitting and extrapolation confidence
#
# Three saturating forms fit the working-curve data almost equally well.
# They disagree once the exposure leaves the measured window, and the
# confidence score is what tells them apart.

# %%
import numpy as np

from amkg.confidence import ConfidenceWeights, score_prediction
from amkg.data import jacobs_csv
from amkg.equations.compile import compile_expression
from amkg.equations.fitting import fit, read_csv
from amkg.equations.latex import free_symbols, parse_latex

data = read_csv(jacobs_csv())
E = np.asarray(data["E"])
print(f"{E.size} points, E in [{E.min():g}, {E.max():g}]")

forms = {
    "log": r"C_d = k_1 \ln(E / k_2)",
    "rational": r"C_d = k_1 \frac{E}{k_2 + E}",
    "exp": r"C_d = k_1 \exp(-k_2 / E)",
}

# %%
models = {}
for name, latex in forms.items():
    eq = parse_latex(latex)
    _, params = free_symbols(eq.rhs)
    f = compile_expression(eq.rhs, ["E"], params, target=eq.target)
    res = fit(f, data)
    models[name] = (f, res)
    print(f"{name:9s} theta={np.round(res.theta, 4)}  R2={res.r_squared:.5f}")

# %% [markdown]
# ## Inside and outside the data

# %%
w = ConfidenceWeights()
for x in (100.0, 300.0, 500.0):
    print(f"E = {x:g}")
    for name, (f, res) in models.items():
        rep = score_prediction(f, res, data, {"E": x}, influence_spec=[("E", 1)], n_assumptions=1, weights=w)
        y = float(f({"E": x}, res.theta))
        print(f"  {name:9s} C_d={y:.4f}  s_dist={rep.s_dist:.3f}  C_total={rep.c_total:.4f}")

# %%
f, res = models["log"]
print(score_prediction(f, res, data, {"E": 300.0}, influence_spec=[("E", 1)], n_assumptions=1,
                       weights=w).components_table(w))
