import numpy as np
import pytest

from crossmpt.checkpoint import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from crossmpt.codes import get_code
from crossmpt.ensemble import build_ensemble
from crossmpt.models import ModelConfig, Variant, init_params
from crossmpt.optim import AdamState


def test_model_checkpoint_round_trip_is_exact(tmp_path):
    code = get_code("bch_15_7")
    cfg = ModelConfig(variant=Variant.CROSSMPT, n_layers=1, embed_dim=8)
    params = init_params(cfg, code, seed=5)
    adam = AdamState.for_params(params)
    adam.t = 17
    for k in adam.m:
        adam.m[k] += 0.125
    path = save_checkpoint(
        tmp_path / "ck.npz", kind="model", model_cfg=cfg, codes=[code], params=params,
        seed=5, step=340, epoch=17, adam=adam,
    )
    ck = load_checkpoint(path)
    assert ck.kind == "model"
    assert ck.model_cfg == cfg
    assert ck.header["step"] == 340 and ck.header["epoch"] == 17
    assert set(ck.params) == set(params)
    for name in params:
        assert ck.params[name].data.tobytes() == params[name].data.tobytes()
        assert ck.adam.m[name].tobytes() == adam.m[name].tobytes()
        assert ck.adam.v[name].tobytes() == adam.v[name].tobytes()
    assert ck.adam.t == 17
    assert ck.codes["bch_15_7"].pcm == code.pcm


def test_ensemble_checkpoint_embeds_branch_pcms(tmp_path):
    code = get_code("bch_31_21")
    base = ModelConfig(variant=Variant.FCROSSMPT, n_layers=1, embed_dim=8)
    ens = build_ensemble(code, 3, base=base)
    params = init_params(base, None, seed=6)
    path = save_checkpoint(
        tmp_path / "ens.npz", kind="ensemble", model_cfg=base, codes=[code], params=params,
        seed=6, step=0, epoch=0, branch_pcms=list(ens.pcms), extra={"p": 3},
    )
    ck = load_checkpoint(path)
    assert ck.kind == "ensemble"
    assert len(ck.branch_pcms) == 3
    for stored, built in zip(ck.branch_pcms, ens.pcms):
        assert stored == built


def test_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, foo=np.ones(3))
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)


def test_rejects_future_version(tmp_path):
    code = get_code("hamming_7_4")
    cfg = ModelConfig(variant=Variant.ECCT, n_layers=1, embed_dim=8)
    params = init_params(cfg, code, seed=1)
    path = save_checkpoint(
        tmp_path / "ck.npz", kind="model", model_cfg=cfg, codes=[code], params=params,
        seed=1, step=0, epoch=0,
    )
    import json
    data = dict(np.load(path, allow_pickle=False))
    header = json.loads(bytes(data["__header__"]).decode())
    header["version"] = 99
    data["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **data)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)
