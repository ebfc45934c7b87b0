import numpy as np
import pytest

from causalshap.builtins import binary_product, breakfast, diabetes_risk
from causalshap.errors import CycleError, ExpressionError, IngestError
from causalshap.scm import NoiseSpec, random_linear_scm, sample
from causalshap.scmfile import dump_scm, load_scm, parse_scm

BREAKFAST_YAML = """
target: Y
nodes:
  - name: C
    mechanism: exogenous normal(60, 25)
  - name: Y
    mechanism: exogenous bernoulli(0.15)
  - name: G
    parents: [C, Y]
    mechanism: 85 + 0.4 * C + 40 * Y + U
    noise: normal(0, 10)
"""


def same_samples(a, b, n=500):
    da, db = sample(a, n, 1), sample(b, n, 1)
    return all(np.allclose(da[k], db[k], rtol=0, atol=1e-12) for k in a.graph.nodes)


def test_parse_matches_builtin():
    assert same_samples(parse_scm(BREAKFAST_YAML), breakfast())


@pytest.mark.parametrize("factory", [breakfast, diabetes_risk, binary_product,
                                     lambda: random_linear_scm(5, 0.7, NoiseSpec.laplace(0, 0.1), 2)[0]])
def test_dump_round_trip(factory):
    m = factory()
    back = parse_scm(dump_scm(m))
    # nodes come back in topological order
    assert set(back.graph.nodes) == set(m.graph.nodes)
    assert (back.graph.edges, back.target) == (m.graph.edges, m.target)
    assert same_samples(back, m)


def test_load_from_file(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text(BREAKFAST_YAML)
    assert load_scm(p).target == "Y"
    with pytest.raises(IngestError):
        load_scm(tmp_path / "missing.yaml")


@pytest.mark.parametrize("text,err", [
    ("target: Y\nnodes: []\n", IngestError),
    ("nodes: [{name: A, mechanism: exogenous normal(0, 1)}]\n", IngestError),
    ("target: A\nnodes: [{name: A}]\n", IngestError),
    ("target: A\nnodes: [{name: A, mechanism: 'exogenous normal(0, 1)'}, "
     "{name: A, mechanism: 'exogenous normal(0, 1)'}]\n", IngestError),
    ("target: A\nnodes: [{name: A, parents: [B], mechanism: B}, {name: B, parents: [A], mechanism: A}]\n",
     CycleError),
    ("target: A\nnodes: [{name: A, mechanism: 'B + 1'}, {name: B, mechanism: 'exogenous normal(0, 1)'}]\n",
     ExpressionError),
    ("target: A\nnodes: [{name: A, mechanism: 'A ** 3'}]\n", ExpressionError),
    ("target: [unclosed\n", IngestError),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_scm(text)


def test_sd_spelling_of_normal_noise():
    text = BREAKFAST_YAML.replace("normal(60, 25)", "normal_sd(60, 5)")
    assert same_samples(parse_scm(text), breakfast())
