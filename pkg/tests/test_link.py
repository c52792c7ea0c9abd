import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uwinfer import link
from uwinfer.device import DeviceProfile, stage_energy
from uwinfer.errors import CrcMismatchError, Fm0ViolationError, InvalidInputError, NoPreambleError

P = DeviceProfile()
bitlists = st.lists(st.integers(0, 1), min_size=1, max_size=256)


def crc8_polydiv(data: bytes) -> int:
    """Bit-serial long division by x^8 + x^2 + x + 1, independent of the table."""
    reg = 0
    for byte in data:
        for i in range(7, -1, -1):
            top = (reg >> 7) & 1
            reg = ((reg << 1) & 0xFF) | 0
            if top ^ ((byte >> i) & 1):
                reg ^= 0x07
    return reg


class TestCrc:
    def test_zero_payload(self):
        assert link.frame([0] * 8).checksum == 0x00

    def test_byte_01(self):
        assert link.frame([0, 0, 0, 0, 0, 0, 0, 1]).checksum == 0x07

    def test_standard_check_value(self):
        assert link.crc8(b"123456789") == 0xF4

    @given(st.binary(max_size=64))
    def test_table_matches_polynomial_division(self, data):
        assert link.crc8(data) == crc8_polydiv(data)

    def test_partial_byte_zero_padded(self):
        bits = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 1]
        assert link.payload_crc(bits) == link.crc8(bytes([0b10110010, 0b11110000]))


class TestFrame:
    def test_layout(self):
        pkt = link.frame([1, 0, 1])
        bits = pkt.bits()
        assert link.bits_to_int(bits[:16]) == 0xAA55
        assert bits[16:19].tolist() == [1, 0, 1]
        assert link.bits_to_int(bits[19:]) == pkt.checksum
        assert len(pkt) == bits.size == 27

    def test_verify(self):
        assert link.verify(link.frame([1, 1, 0, 1]))

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            link.frame([])

    def test_non_binary(self):
        with pytest.raises(InvalidInputError):
            link.frame([0, 2])


class TestFm0:
    def test_ones_from_low(self):
        assert link.fm0_encode([1, 1], 0).chips.tolist() == [1, 1, 0, 0]

    def test_zero_from_low(self):
        assert link.fm0_encode([0], 0).chips.tolist() == [1, 0]

    def test_rule_by_hand(self):
        # reference encoder written directly from the line-code rule
        def ref(bits, level):
            chips = []
            for b in bits:
                level ^= 1
                chips.append(level)
                if b == 0:
                    level ^= 1
                chips.append(level)
            return chips

        rng = np.random.default_rng(0)
        for _ in range(50):
            bits = rng.integers(0, 2, int(rng.integers(1, 40))).tolist()
            for level in (0, 1):
                assert link.fm0_encode(bits, level).chips.tolist() == ref(bits, level)

    def test_duration_12_bits(self):
        assert link.fm0_encode([0] * 12, 0, 1000.0).duration_s == 0.012

    def test_roundtrip_1000(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            bits = rng.integers(0, 2, int(rng.integers(1, 300)))
            for level in (0, 1):
                chips = link.fm0_encode(bits, level)
                assert np.array_equal(link.fm0_decode(chips, level), bits)

    @given(bitlists, st.integers(0, 1))
    def test_boundary_inversion(self, bits, level):
        c = link.fm0_encode(bits, level).chips
        assert np.all(c[1:-1:2] != c[2::2])
        assert c[0] != level

    @given(bitlists, bitlists)
    def test_injective(self, a, b):
        if a != b:
            ca, cb = link.fm0_encode(a, 0).chips, link.fm0_encode(b, 0).chips
            assert ca.size != cb.size or not np.array_equal(ca, cb)

    def test_violation_reported_with_position(self):
        chips = link.fm0_encode([1, 0, 1, 1], 0).chips.copy()
        chips[3] ^= 1  # chips 3 and 4 now agree across the boundary
        with pytest.raises(Fm0ViolationError) as info:
            link.fm0_decode(chips)
        assert info.value.position == 4
        assert link.fm0_decode(chips, strict=False).size == 4

    def test_odd_chip_count(self):
        with pytest.raises(InvalidInputError):
            link.fm0_decode([1, 0, 1])


class TestChannel:
    def test_clean_levels(self):
        samples, _ = link.transmit([1, 0, 1], link.ChannelModel(1.0, 0.0), P)
        assert set(samples.tolist()) <= {1.0, 0.2}

    def test_report_12_bits(self):
        _, report = link.transmit([1] * 12, link.ChannelModel(), P)
        assert report.duration_s == 0.012
        assert report.energy_mj == pytest.approx(0.0108, abs=5e-5)
        assert report.energy_mj == stage_energy(P.p_backscatter_uw, report.duration_s)

    def test_framed_duration(self):
        _, report = link.transmit(link.frame([0] * 12), link.ChannelModel(), P)
        assert report.bits == 36
        assert report.duration_s == pytest.approx(0.036)

    def test_noise_seeded(self):
        ch = link.ChannelModel(0.5, 0.1, seed=4)
        a, _ = link.transmit(link.frame([1, 0]), ch, P)
        b, _ = link.transmit(link.frame([1, 0]), ch, P)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("kwargs", [{"attenuation": 0}, {"attenuation": 1.5}, {"noise_sigma": -1}])
    def test_bad_channel(self, kwargs):
        with pytest.raises(InvalidInputError):
            link.ChannelModel(**kwargs)


class TestReceive:
    @given(bitlists, st.integers(0, 1), st.integers(0, 40), st.sampled_from([1.0, 0.3, 0.05]))
    def test_clean_loopback(self, payload, level, lead_in, attenuation):
        ch = link.ChannelModel(attenuation, 0.0)
        samples, _ = link.transmit(link.frame(payload), ch, P, level, lead_in)
        assert link.receive(samples, ch).tolist() == payload
        assert link.receive(samples).tolist() == payload

    def test_with_known_length_and_trailing_idle(self):
        ch = link.ChannelModel()
        samples, _ = link.transmit(link.frame([1, 0, 0, 1]), ch, P)
        samples = np.concatenate([samples, np.full(20, 0.2)])
        assert link.receive(samples, ch, payload_bits=4).tolist() == [1, 0, 0, 1]

    def test_boundary_chip_pair_flip_is_crc_mismatch(self):
        ch = link.ChannelModel()
        payload = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0]
        samples, _ = link.transmit(link.frame(payload), ch, P)
        chips = link.hard_decisions(samples, ch)
        k = 2 * (16 + 5) + 1  # last chip of payload bit 5 and first chip of bit 6
        chips[k:k + 2] ^= 1
        with pytest.raises(CrcMismatchError):
            link.receive(np.where(chips == 1, 1.0, 0.2), ch)

    def test_in_bit_pair_flip_is_fm0_violation(self):
        ch = link.ChannelModel()
        samples, _ = link.transmit(link.frame([1, 0, 1, 1]), ch, P)
        chips = link.hard_decisions(samples, ch)
        chips[2 * 17:2 * 17 + 2] ^= 1
        with pytest.raises(Fm0ViolationError):
            link.receive(np.where(chips == 1, 1.0, 0.2), ch)

    def test_noise_only(self):
        noise = np.random.default_rng(0).normal(0, 0.3, 2000)
        with pytest.raises(NoPreambleError):
            link.receive(noise)

    def test_too_short(self):
        with pytest.raises(NoPreambleError):
            link.receive(np.zeros(10))

    def test_errors_are_distinguishable(self):
        kinds = {NoPreambleError.kind, Fm0ViolationError.kind, CrcMismatchError.kind}
        assert kinds == {"no-preamble", "fm0-violation", "crc-mismatch"}


def test_ber_non_decreasing_with_noise():
    sigmas = [0.0, 0.1, 0.2, 0.3, 0.4, 0.6]
    bers = [link.bit_error_rate(20_000, link.ChannelModel(1.0, s), seed=3) for s in sigmas]
    assert bers[0] == 0.0
    assert all(b >= a for a, b in zip(bers, bers[1:]))
    assert bers[-1] > 0.05
