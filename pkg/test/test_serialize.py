import dataclasses
import unittest
from datetime import datetime, timezone
from typing import Dict, Tuple

import numpy as np

from risk_map.catalog import LayerId
from risk_map.serialize import RiskMapSerializeMixin, canonical_dumps, fingerprint


@dataclasses.dataclass(frozen=True, eq=False)
class Sample(RiskMapSerializeMixin):
    name: str
    layer: LayerId
    values: np.ndarray
    tags: frozenset = frozenset()
    secret: str = "hidden"
    scores: Dict[LayerId, float] = dataclasses.field(default_factory=dict)
    when: datetime = datetime(2024, 5, 17, 12, 30, 15, 999, tzinfo=timezone.utc)

    __rm_exclude_serialize_fields__ = ["secret"]
    __rm_property_fields__ = ["size"]
    __rm_column_type_converters__ = {"name": lambda v: v.upper()}
    __rm_convert_types__ = {"layer": LayerId.from_code, "values": np.asarray}

    @property
    def size(self) -> int:
        return int(self.values.size)

    @classmethod
    def __rm_before_update__(cls, data_dict: dict) -> dict:
        data_dict.setdefault("values", [])
        return data_dict

    def __rm_verify__(self):
        if not self.name:
            raise ValueError("name required")
        return True


@dataclasses.dataclass(frozen=True)
class Pair(RiskMapSerializeMixin):
    left: Sample
    right: Tuple[float, float]


class TestCanonicalJson(unittest.TestCase):
    def test_sorted_and_compact(self):
        assert canonical_dumps({"b": 1, "a": [1.5, "x"]}) == b'{"a":[1.5,"x"],"b":1}'

    def test_unicode_kept(self):
        assert canonical_dumps({"k": "défense"}) == '{"k":"défense"}'.encode("utf-8")

    def test_nan_rejected(self):
        with self.assertRaises(ValueError):
            canonical_dumps({"x": float("nan")})

    def test_shortest_float_repr(self):
        assert canonical_dumps([0.1, 1e-20, 0.3 - 0.1]) == b"[0.1,1e-20,0.19999999999999998]"

    def test_fingerprint(self):
        a = fingerprint({"a": 1, "b": 2})
        b = fingerprint({"b": 2, "a": 1})
        assert a == b
        assert a.startswith("sha256:")
        assert len(a) == len("sha256:") + 64
        assert fingerprint({"a": 1.0}) != fingerprint({"a": 1})


class TestMixin(unittest.TestCase):
    def sample(self, **kwargs):
        values = dict(name="sample", layer=LayerId.DM, values=np.array([0.5, -0.0, 1.0]))
        values.update(kwargs)
        return Sample(**values)

    def test_as_dict(self):
        d = self.sample(tags=frozenset({"b", "a"}), scores={LayerId.SI: 2.5}).rm_as_dict
        assert d["name"] == "SAMPLE"
        assert d["layer"] == "DM"
        assert d["values"] == [0.5, 0.0, 1.0]
        assert d["tags"] == ["a", "b"]
        assert d["scores"] == {"SI": 2.5}
        assert d["size"] == 3
        assert d["when"] == "2024-05-17T12:30:15Z"
        assert "secret" not in d

    def test_negative_zero_normalized(self):
        assert b"-0.0" not in self.sample().rm_as_json

    def test_nested(self):
        pair = Pair(left=self.sample(), right=(np.float64(0.25), 1))
        d = pair.rm_as_dict
        assert d["left"]["layer"] == "DM"
        assert d["right"] == [0.25, 1]
        assert isinstance(d["right"][0], float)

    def test_props_cached_per_class(self):
        first = Sample._rm_get_props()
        assert Sample._rm_get_props() is first
        assert first.name == "Sample"
        assert [f.name for f in first.field_list][-1] == "size"
        assert Pair._rm_get_props() is not first

    def test_from_dict(self):
        item = Sample.rm_from_dict({"name": "x", "layer": "AP", "values": [1, 2], "unknown": 3})
        assert item.layer is LayerId.AP
        assert isinstance(item.values, np.ndarray)
        assert item.size == 2

    def test_before_update_hook(self):
        item = Sample.rm_from_dict({"name": "x", "layer": "P"})
        assert item.size == 0

    def test_verify_hook(self):
        with self.assertRaises(ValueError):
            Sample.rm_from_dict({"name": "", "layer": "P", "values": []})

    def test_fingerprint_tracks_content(self):
        assert self.sample().rm_fingerprint == self.sample().rm_fingerprint
        assert self.sample().rm_fingerprint != self.sample(layer=LayerId.AP).rm_fingerprint
