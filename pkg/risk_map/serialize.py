import dataclasses
import enum
import hashlib
import json
import logging
from datetime import datetime, timezone

import numpy as np
from permissive_dict import PermissiveDict

logger = logging.getLogger(__name__)


def canonical_dumps(value) -> bytes:
    """
    canonical JSON bytes: keys sorted, no insignificant whitespace, floats in
    their shortest round-trip form (at most 17 significant digits), no NaN

    :param value: a JSON compatible value, usually an rm_as_dict result
    :return: UTF-8 bytes
    """
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def fingerprint(value) -> str:
    """
    content hash of the canonical serialization

    :param value: a JSON compatible value
    :return: "sha256:<hex digest>"
    """
    return "sha256:" + hashlib.sha256(canonical_dumps(value)).hexdigest()


class RiskMapSerializeMixin:
    """
    Base mix in class to implement serialization and loading for the risk_map
    dataclasses. Fields are converted to JSON compatible values on the way out
    and passed through per field converters on the way in.
    """

    # fields that should not be exposed by serialization
    __rm_exclude_serialize_fields__ = []
    # read only properties to include in serialization
    __rm_property_fields__ = []
    # add your own output converters here, keyed by field name
    __rm_column_type_converters__ = {}
    # input converters applied by rm_from_dict, keyed by field name
    __rm_convert_types__ = {}
    # types that can be converted to json
    __rm_json_types = [str, dict, list, int, float, bool]
    # cache model properties
    __rm_model_props = {}
    # current version
    __rm_version__ = "1.0.0"

    @classmethod
    def __rm_before_update__(cls, data_dict: dict) -> dict:
        """
        hook called by rm_from_dict before any field is converted, so that a
        subclass may rename or default values

        :param data_dict: the raw data
        :return: the data_dict to use
        """
        return data_dict

    def __rm_verify__(self):
        """
        hook to verify an item built by rm_from_dict.
        raise an exception if the item is not valid
        """
        return True

    @staticmethod
    def __rm_to_date_short__(d: datetime) -> str:
        """
        convert the given date to an ISO 8601 UTC string without fractional seconds

        :param d: the datetime to convert
        :return: the short date
        """
        if d.tzinfo is not None:
            d = d.astimezone(timezone.utc).replace(tzinfo=None)
        return d.replace(microsecond=0).isoformat() + "Z"

    def __rm_property_converter__(self, value):
        """
        convert to a json compatible format.

        * datetime - short format as per __rm_to_date_short__
        * enum - its code when it has one, otherwise its value
        * numpy array or scalar - nested lists of python numbers
        * set - becomes a sorted list
        * mixin - its rm_as_dict
        * anything else not supported by json becomes a str

        :param value: value to convert
        :return: the new value
        """
        if value is None:
            return None
        if isinstance(value, datetime):
            return self.__rm_to_date_short__(value)
        if isinstance(value, enum.Enum):
            return getattr(value, "code", value.value)
        if isinstance(value, RiskMapSerializeMixin):
            return value.rm_as_dict
        if isinstance(value, np.ndarray):
            return [self.__rm_property_converter__(v) for v in value.tolist()]
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, (float, np.floating)):
            value = float(value)
            # no negative zero in canonical output
            return 0.0 if value == 0 else value
        if isinstance(value, (set, frozenset)):
            return sorted(self.__rm_property_converter__(v) for v in value)
        if isinstance(value, (list, tuple)):
            return [self.__rm_property_converter__(v) for v in value]
        if isinstance(value, dict):
            return {
                str(self.__rm_property_converter__(k)): self.__rm_property_converter__(v)
                for k, v in value.items()
            }
        if type(value) not in self.__rm_json_types:
            return str(value)
        return value

    @classmethod
    def _rm_get_props(cls) -> PermissiveDict:
        """
        get the serializable fields of this class, cached per class

        :return: properties PermissiveDict
        """
        props = cls.__rm_model_props.get(cls)
        if not props:
            field_list = [
                PermissiveDict(name=f.name, converter=None)
                for f in dataclasses.fields(cls)
                if f.name not in cls.__rm_exclude_serialize_fields__
            ]
            field_list += [
                PermissiveDict(name=p, converter=None)
                for p in cls.__rm_property_fields__
            ]
            for f in field_list:
                f.converter = cls.__rm_column_type_converters__.get(f.name)
            props = PermissiveDict(name=cls.__name__, field_list=field_list)
            cls.__rm_model_props[cls] = props
        return props

    @property
    def rm_as_dict(self) -> dict:
        """
        convert the item to a dict of JSON compatible values. Override these
        properties to control the result:

        * __rm_exclude_serialize_fields__ - exclude listed fields
        * __rm_property_fields__ - include listed properties
        * __rm_column_type_converters__ - per field converter

        :return: the item as a dict
        """
        d = {}
        for c in self._rm_get_props().field_list:
            v = getattr(self, c.name)
            if c.converter:
                v = c.converter(v)
            d[c.name] = self.__rm_property_converter__(v)
        return d

    @property
    def rm_as_json(self) -> bytes:
        """
        the item as canonical JSON bytes
        """
        return canonical_dumps(self.rm_as_dict)

    @property
    def rm_fingerprint(self) -> str:
        return fingerprint(self.rm_as_dict)

    @classmethod
    def rm_from_dict(cls, data_dict: dict):
        """
        create an item from a dict, converting each known field with
        __rm_convert_types__ then calling __rm_verify__

        :param data_dict: the data, usually parsed JSON
        :return: the new item
        """
        data_dict = cls.__rm_before_update__(dict(data_dict))
        kwargs = {}
        for f in dataclasses.fields(cls):
            if not f.init or f.name not in data_dict:
                continue
            value = data_dict[f.name]
            converter = cls.__rm_convert_types__.get(f.name)
            kwargs[f.name] = converter(value) if converter else value
        item = cls(**kwargs)
        item.__rm_verify__()
        return item
