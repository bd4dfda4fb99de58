import numpy as np
import pytest

from figgen import MAGIC, FigureSpec, SchemaError, read_log, render

HEADER = ("step,t,dt,n_cells,n_dofs,zeta_S1,zeta_S2,zeta_S3,zeta_S4,"
          "zeta_T1,zeta_T2,zeta_S_acc,zeta_T_acc,exponent,zeta_full")


def _write(path, n_rows=3):
    rows = [",".join(str(float(10 * i + j)) for j in range(15))
            for i in range(n_rows)]
    path.write_text("\n".join([MAGIC, HEADER] + rows) + "\n")
    return path


def test_read_log_round_trip(tmp_path):
    data = read_log(_write(tmp_path / "a.csv"))
    assert list(data) == HEADER.split(",")
    assert np.array_equal(data["t"], [1.0, 11.0, 21.0])


def test_missing_magic(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(HEADER + "\n1,2\n")
    with pytest.raises(SchemaError, match="estimator log"):
        read_log(p)


def test_empty_data(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(MAGIC + "\n" + HEADER + "\n")
    with pytest.raises(SchemaError, match="empty data"):
        read_log(p)


def test_missing_column_named(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(MAGIC + "\n" + HEADER.replace("zeta_S4", "zeta_XX")
                 + "\n" + ",".join(["1.0"] * 15) + "\n")
    with pytest.raises(SchemaError, match="zeta_S4"):
        render(FigureSpec(str(p), str(tmp_path / "o.png")))


def test_render_deterministic(tmp_path):
    csv = _write(tmp_path / "a.csv")
    a = tmp_path / "a.png"
    b = tmp_path / "b.png"
    render(FigureSpec(str(csv), str(a)))
    render(FigureSpec(str(csv), str(b), omit_full=True, logy=True))
    render(FigureSpec(str(csv), str(tmp_path / "c.png")))
    assert a.read_bytes() == (tmp_path / "c.png").read_bytes()
    assert a.read_bytes() != b.read_bytes()


def test_unknown_panel(tmp_path):
    csv = _write(tmp_path / "a.csv")
    with pytest.raises(SchemaError, match="unknown panel"):
        render(FigureSpec(str(csv), str(tmp_path / "o.png"), panels=("pies",)))
