import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leapforge.crypto import KeyRole, KeyRoleError, SymKey, chain_verify, prf
from leapforge.keying import (
    BootstrapErased,
    NodeKeyStore,
    StoreDecodeError,
    derive_individual_key,
    derive_master_key,
    derive_pairwise_key,
    encode_id,
    erase_bootstrap,
    generate_cluster_key,
    preload_network,
    random_key,
)
from leapforge.selftest import RFC4493_KEY

from oracles import ref_cmac

K_IN = SymKey(RFC4493_KEY, KeyRole.INITIAL)
K_M = SymKey(RFC4493_KEY, KeyRole.GLOBAL)

# Frozen from tests/oracles.py with K_in = the RFC 4493 key
K_9 = "d65cd48bd41a08a748fcf44545cf6963"
K_7_9 = "dc13d00f42276a6be72418bf1f09d741"


def make_store(node_id=7, rng=None):
    rng = rng or random.Random(node_id)
    bundles, _ = preload_network(max(node_id, 1), K_IN, random_key(rng, KeyRole.GLOBAL), rng)
    return bundles[node_id - 1].new_store()


def test_encode_id_big_endian_and_bounds():
    assert encode_id(1) == b"\x00\x01"
    assert encode_id(0x1234) == b"\x12\x34"
    with pytest.raises(ValueError):
        encode_id(0x10000)
    with pytest.raises(ValueError):
        encode_id(-1)


def test_individual_key_known_value():
    ik = derive_individual_key(K_M, 1)
    assert ik.value == ref_cmac(RFC4493_KEY, b"\x00\x01")
    assert ik.value.hex() == "211a9792c8485ef94af554694afcf301"
    assert ik.role is KeyRole.INDIVIDUAL


def test_individual_key_deterministic_and_distinct():
    assert derive_individual_key(K_M, 1) == derive_individual_key(K_M, 1)
    assert derive_individual_key(K_M, 1) != derive_individual_key(K_M, 2)


def test_master_key_is_prf_of_initial_key():
    for u in (1, 9, 300, 0xFFFE):
        assert derive_master_key(K_IN, u).value == ref_cmac(RFC4493_KEY, encode_id(u))
    assert derive_master_key(K_IN, 9).value.hex() == K_9


def test_master_key_after_erasure_raises():
    with pytest.raises(BootstrapErased):
        derive_master_key(None, 3)
    store = erase_bootstrap(make_store())
    with pytest.raises(BootstrapErased):
        store.master_key_for(3)


def test_pairwise_dual_path_7_9():
    # node 7 derives K_9 from K_in; node 9 already owns K_9 as its master key
    u_side = derive_pairwise_key(derive_master_key(K_IN, 9), 7)
    bundles, _ = preload_network(9, K_IN, K_M, random.Random(0))
    node9 = bundles[8].new_store()
    v_side = derive_pairwise_key(node9.own_master_key, 7)
    oracle = ref_cmac(ref_cmac(RFC4493_KEY, encode_id(9)), encode_id(7))
    assert u_side == v_side
    assert u_side.value == oracle
    assert u_side.value.hex() == K_7_9


def test_pair_key_for_agrees_from_both_ends():
    bundles, _ = preload_network(12, K_IN, K_M, random.Random(1))
    stores = [b.new_store() for b in bundles]
    for a in stores:
        for b in stores:
            if a.node_id != b.node_id:
                assert a.pair_key_for(b.node_id) == b.pair_key_for(a.node_id)


def test_pairwise_keys_distinct_across_pairs():
    rng = random.Random(2)
    k_in = random_key(rng, KeyRole.INITIAL)
    seen = {}
    for _ in range(150):
        u, v = rng.sample(range(1, 500), 2)
        lo, hi = sorted((u, v))
        key = derive_pairwise_key(derive_master_key(k_in, hi), lo).value
        assert key == ref_cmac(ref_cmac(k_in.value, encode_id(hi)), encode_id(lo))
        if key in seen:
            assert seen[key] == (lo, hi)
        seen[key] = (lo, hi)
    # K_{7,9} vs K_{7,11}
    assert derive_pairwise_key(derive_master_key(K_IN, 9), 7) != derive_pairwise_key(
        derive_master_key(K_IN, 11), 7
    )


def test_role_discipline():
    with pytest.raises(KeyRoleError):
        derive_individual_key(K_IN, 1)
    with pytest.raises(KeyRoleError):
        derive_master_key(K_M, 1)
    with pytest.raises(KeyRoleError):
        derive_pairwise_key(K_IN, 1)
    store = make_store()
    with pytest.raises(KeyRoleError):
        store.set_pairwise(3, SymKey(bytes(16), KeyRole.CLUSTER))


def test_no_pairwise_entry_for_self():
    store = make_store(5)
    with pytest.raises(ValueError):
        store.set_pairwise(5, SymKey(bytes(16), KeyRole.PAIRWISE))
    with pytest.raises(ValueError):
        store.pair_key_for(5)


def test_cluster_key_generation():
    a, b = random.Random(9), random.Random(9)
    k1, k2 = generate_cluster_key(a), generate_cluster_key(a)
    assert k1 == generate_cluster_key(b)
    assert k1 != k2
    assert len(k1.value) == 16 and k1.role is KeyRole.CLUSTER


def test_erase_keeps_operational_keys():
    store = make_store(7)
    for v in (8, 9, 10):
        store.set_pairwise(v, store.pair_key_for(v))
    assert sorted(store.neighbor_master_cache) == [8, 9, 10]
    store.own_cluster_key = generate_cluster_key(random.Random(0))
    before = store.copy()
    erase_bootstrap(store)
    assert store.erased and store.initial_key is None and not store.neighbor_master_cache
    assert store.pairwise_keys == before.pairwise_keys
    assert store.own_cluster_key == before.own_cluster_key
    assert store.individual_key == before.individual_key
    assert store.global_key == before.global_key
    assert store.sequence_number == before.sequence_number


def test_erase_is_idempotent():
    store = erase_bootstrap(make_store())
    once = store.to_bytes()
    assert erase_bootstrap(store).to_bytes() == once


def test_erasure_leaves_no_bootstrap_bytes_in_dump():
    store = make_store(7)
    masters = [store.master_key_for(v).value for v in (1, 2, 3)]
    k_in = store.initial_key.value
    dump = store.to_bytes()
    assert k_in in dump and all(m in dump for m in masters)
    erase_bootstrap(store)
    dump = store.to_bytes()
    assert k_in not in dump
    assert not any(m in dump for m in masters)


def test_dump_round_trip_and_size():
    store = make_store(7)
    for v in (1, 3):
        store.set_pairwise(v, store.pair_key_for(v))
    store.neighbor_cluster_keys[3] = generate_cluster_key(random.Random(4))
    for s in (store, erase_bootstrap(store.copy())):
        data = s.to_bytes()
        assert NodeKeyStore.from_bytes(data) == s
        assert s.dump_size() == len(data)


def test_dump_layout_header():
    data = make_store(7).to_bytes()
    assert data[:4] == b"LKS1"
    # first record: tag 1, length 2 (little-endian), node id 7 big-endian
    assert data[4:9] == b"\x01\x02\x00\x00\x07"


@pytest.mark.parametrize("data", [b"", b"XXXX", b"LKS1\x01\x02", b"LKS1\x63\x00\x00"])
def test_dump_decode_rejects_garbage(data):
    with pytest.raises(StoreDecodeError):
        NodeKeyStore.from_bytes(data)


def test_preload_20_nodes():
    bundles, seed = preload_network(20, K_IN, K_M, random.Random(20))
    assert [b.node_id for b in bundles] == list(range(1, 21))
    assert len({b.sequence_number for b in bundles}) == 20
    for b in bundles:
        assert b.individual_key == derive_individual_key(b.global_key, b.node_id)
        assert seed.expected[b.node_id] == b.sequence_number
        assert b.chain_commitment == seed.chain.commitment
    assert chain_verify(seed.chain.element(1), bundles[0].chain_commitment, 1)


def test_preload_deterministic():
    a = preload_network(6, K_IN, K_M, random.Random(3))
    b = preload_network(6, K_IN, K_M, random.Random(3))
    assert a[0] == b[0]
    assert a[1].expected == b[1].expected


def test_preload_rejects_zero_nodes():
    with pytest.raises(ValueError):
        preload_network(0, K_IN, K_M, random.Random(0))


@settings(max_examples=50, deadline=None)
@given(ids=st.lists(st.integers(1, 24), min_size=2, max_size=6, unique=True),
       seed=st.integers(0, 2**32))
def test_erased_store_derives_only_local_pairwise_keys(ids, seed):
    """Anything one PRF step from an erased dump's keys is not a foreign pair key."""
    rng = random.Random(seed)
    k_in = random_key(rng, KeyRole.INITIAL)
    c, others = ids[0], ids[1:]
    bundles, _ = preload_network(max(ids), k_in, random_key(rng, KeyRole.GLOBAL), rng)
    store = bundles[c - 1].new_store()
    for v in others:
        store.set_pairwise(v, store.pair_key_for(v))
    erase_bootstrap(store)
    foreign = {
        derive_pairwise_key(derive_master_key(k_in, hi), lo).value
        for lo in range(1, max(ids) + 1) for hi in range(lo + 1, max(ids) + 1)
        if c not in (lo, hi)
    }
    reachable = set()
    for key in store.all_keys():
        for u in range(0, max(ids) + 1):
            reachable.add(prf(key, encode_id(u), key.role).value)
    assert k_in.value not in reachable
    assert not (reachable & foreign)
