"""Packed snapshot format: round trips, parameter pairing, corruption."""
import struct

import numpy as np
import pytest

from conftest import BC_COMBOS
from layerkac import spinio
from layerkac.model import Lattice, ModelParams, SpinConfig, ValidationError


@pytest.mark.parametrize("hbc,vbc", BC_COMBOS)
def test_round_trip_preserves_spins_and_boundary(tmp_path, rng, hbc, vbc):
    lat = Lattice(13, 3, hbc, vbc)
    cfg = SpinConfig.random(lat, rng)
    path = tmp_path / "snap.bin"
    spinio.write_spins(path, cfg)
    back = spinio.read_spins(path)
    assert np.array_equal(back.spins, cfg.spins)
    assert back.lattice.L == 13 and back.lattice.H == 3
    assert back.lattice.horizontal_bc == hbc
    assert back.lattice.vertical_bc == vbc


def test_padding_bits_do_not_leak(tmp_path):
    lat = Lattice(5, 3, "periodic", "periodic")
    cfg = SpinConfig.constant(lat, -1)
    cfg.spins[2, 4] = 1
    path = tmp_path / "odd.bin"
    spinio.write_spins(path, cfg)
    back = spinio.read_spins(path)
    assert np.array_equal(back.spins, cfg.spins)
    assert back.spins.sum() == -13


def test_parameter_digest_pairing(tmp_path, rng):
    params = ModelParams(beta=2.0, gamma=0.3)
    other = ModelParams(beta=2.0, gamma=0.25)
    lat = Lattice(8, 2, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng)
    path = tmp_path / "snap.bin"
    spinio.write_spins(path, cfg, params)
    assert np.array_equal(spinio.read_spins(path, params).spins, cfg.spins)
    # a reader that does not care about parameters still gets the spins
    assert np.array_equal(spinio.read_spins(path).spins, cfg.spins)
    with pytest.raises(ValidationError, match="different model parameters"):
        spinio.read_spins(path, other)


def test_anonymous_snapshot_pairs_with_anything(tmp_path, rng):
    lat = Lattice(8, 2, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng)
    path = tmp_path / "anon.bin"
    spinio.write_spins(path, cfg)
    back = spinio.read_spins(path, ModelParams(beta=3.0, gamma=0.5))
    assert np.array_equal(back.spins, cfg.spins)


def test_corruption_is_rejected(tmp_path, rng):
    lat = Lattice(8, 2, "periodic", "periodic")
    cfg = SpinConfig.random(lat, rng)
    good = tmp_path / "good.bin"
    spinio.write_spins(good, cfg)
    raw = good.read_bytes()

    bad = tmp_path / "bad.bin"
    bad.write_bytes(raw[:10])
    with pytest.raises(ValidationError, match="truncated"):
        spinio.read_spins(bad)

    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValidationError, match="bad magic"):
        spinio.read_spins(bad)

    bumped = bytearray(raw)
    bumped[4:6] = struct.pack("<H", 99)
    bad.write_bytes(bytes(bumped))
    with pytest.raises(ValidationError, match="format version"):
        spinio.read_spins(bad)

    bad.write_bytes(raw[:-1])
    with pytest.raises(ValidationError, match="payload too short"):
        spinio.read_spins(bad)

    coded = bytearray(raw)
    coded[14] = 7    # horizontal bc byte
    bad.write_bytes(bytes(coded))
    with pytest.raises(ValidationError, match="unknown boundary code"):
        spinio.read_spins(bad)
