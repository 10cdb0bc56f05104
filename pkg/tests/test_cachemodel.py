import pytest

from tiersim.cachemodel import Llc, LlcConfig
from tiersim.errors import ConfigError, SimulationFault
from tiersim.trace import Origin, RequestKind, Xorshift64Star

R = RequestKind.READ
W = RequestKind.WRITE


def small_llc(sets=1, ways=2, line=64):
    return Llc(LlcConfig(size_bytes=sets * ways * line, associativity=ways,
                         line_bytes=line))


def test_cold_miss():
    llc = small_llc()
    assert not llc.access(0x40, R, 0).hit
    assert llc.demand_misses == 1


def test_prefetch_then_demand_counts_useful():
    llc = small_llc()
    llc.access(0x80, R, 0)
    llc.fill(0x80, Origin.PREFETCH_LLC, 1)
    result = llc.access(0x80, R, 2)
    assert result.hit and result.first_prefetch_touch
    assert llc.useful_prefetches == 1
    # second touch is an ordinary hit
    assert not llc.access(0x80, R, 3).first_prefetch_touch
    assert llc.useful_prefetches == 1


def test_two_way_pollution_scenario():
    # hand-simulated 2-way set: demand-fill A and B, prefetch-fill C evicting
    # LRU A, then demand A misses and counts as pollution
    llc = small_llc(sets=1, ways=2)
    a, b, c = 0x000, 0x040, 0x080
    llc.access(a, R, 0)
    llc.fill(a, Origin.DEMAND, 0)
    llc.access(b, R, 1)
    llc.fill(b, Origin.DEMAND, 1)
    llc.access(c, R, 2)
    evicted = llc.fill(c, Origin.PREFETCH_LLC, 2)
    assert evicted.block == a
    result = llc.access(a, R, 3)
    assert not result.hit
    assert llc.pollution_misses == 1


def test_fill_invalid_way_no_eviction():
    llc = small_llc()
    llc.access(0x40, R, 0)
    assert llc.fill(0x40, Origin.DEMAND, 0) is None


def test_demand_eviction_not_shadowed():
    llc = small_llc(sets=1, ways=2)
    for i, addr in enumerate((0x000, 0x040, 0x080)):
        llc.access(addr, R, i)
        llc.fill(addr, Origin.DEMAND, i)
    # demand fill evicted A; a re-miss on A is not pollution
    llc.access(0x000, R, 9)
    assert llc.pollution_misses == 0


def test_double_fill_faults():
    llc = small_llc()
    llc.access(0x40, R, 0)
    llc.fill(0x40, Origin.DEMAND, 0)
    with pytest.raises(SimulationFault):
        llc.fill(0x40, Origin.DEMAND, 1)


def test_write_marks_dirty_and_eviction_reports_it():
    llc = small_llc(sets=1, ways=1)
    llc.access(0x00, W, 0)
    llc.fill(0x00, Origin.DEMAND, 0, make_dirty=True)
    llc.access(0x40, R, 1)
    evicted = llc.fill(0x40, Origin.DEMAND, 1)
    assert evicted.dirty and evicted.block == 0x00


def test_unused_prefetch_eviction_flagged():
    llc = small_llc(sets=1, ways=1)
    llc.access(0x00, R, 0)
    llc.fill(0x00, Origin.PREFETCH_LLC, 0)
    llc.access(0x40, R, 1)
    evicted = llc.fill(0x40, Origin.DEMAND, 1)
    assert evicted.was_unused_prefetch


def test_llc_config_validation():
    with pytest.raises(ConfigError):
        LlcConfig(size_bytes=1024, associativity=32, line_bytes=64)
    with pytest.raises(ConfigError):
        LlcConfig(size_bytes=3000)


def test_lru_equivalence_against_reference():
    # reference oracle: most-recent-first list of blocks on one set
    llc = small_llc(sets=1, ways=4)
    reference = []
    rng = Xorshift64Star(7)
    hits = misses = 0
    for step in range(10_000):
        block = rng.below(12) * 64
        expect_hit = block in reference
        if expect_hit:
            reference.remove(block)
        else:
            if len(reference) == 4:
                reference.pop()
        reference.insert(0, block)
        result = llc.access(block, R, step)
        assert result.hit == expect_hit
        if not result.hit:
            llc.fill(block, Origin.DEMAND, step)
            misses += 1
        else:
            hits += 1
    assert llc.demand_hits == hits and llc.demand_misses == misses


def test_conservation_and_bounds():
    llc = small_llc(sets=4, ways=2)
    rng = Xorshift64Star(3)
    for step in range(2000):
        addr = rng.below(64) * 64
        if rng.below(4) == 0 and not llc.contains(addr):
            llc.fill(addr, Origin.PREFETCH_LLC, step)
            continue
        result = llc.access(addr, R, step)
        if not result.hit:
            llc.fill(addr, Origin.DEMAND, step)
    assert llc.demand_hits + llc.demand_misses == llc.demand_accesses
    assert llc.useful_prefetches <= llc.prefetch_fills
    assert llc.pollution_misses <= llc.demand_misses


def test_no_prefetch_means_no_pollution_or_useful():
    llc = small_llc(sets=2, ways=2)
    rng = Xorshift64Star(5)
    for step in range(500):
        addr = rng.below(32) * 64
        if not llc.access(addr, R, step).hit:
            llc.fill(addr, Origin.DEMAND, step)
    assert llc.pollution_misses == 0
    assert llc.useful_prefetches == 0
