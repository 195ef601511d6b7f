# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""YAML loading of experiment configs with tagged fixtures."""
from __future__ import annotations

import dataclasses as dc
import logging
from functools import partial
from typing import Any, Dict, Optional, Type
from uuid import UUID, uuid5

import yaml

logger = logging.getLogger(__name__)

MONOLAB_YAML_UUID_NAMESPACE = UUID(int=0x3f9b61c2a4d84e0f9a1c5e7b20d4c8a6,
                                   version=5)


class Loader(yaml.SafeLoader):
    """YAML safe loader with the monolab fixture tags."""

    ...


@dc.dataclass
class _Constructor():
    """YAML constructor that remembers the node each instance comes from.

    Attributes:
        target_cls: The class instantiated every time the constructor is
            called.

    """

    target_cls: Type[YAMLRegistered]

    def __call__(self, loader: yaml.SafeLoader, node: yaml.Node) \
            -> YAMLRegistered:
        """YAML constructor for this subclass."""
        if not isinstance(loader, Loader):
            raise TypeError(f'loader should be an instance of '
                            f'monolab.yaml.Loader, but got {loader}.')
        if isinstance(node, yaml.MappingNode):
            kwargs = loader.construct_mapping(node, deep=True)
        elif isinstance(node, yaml.ScalarNode) and not node.value:
            kwargs = {}
        else:
            raise TypeError('The YAML node must be a mapping or an empty '
                            f'scalar, but got {node}.')
        return self.target_cls.from_node(node, kwargs)


class YAMLRegistered(object):
    """Object automatically registered as a tag of :class:`Loader`."""

    _yaml_input_node: yaml.nodes.Node
    _yaml_input_params: Dict[str, Any]

    def __init_subclass__(cls, register_yaml: bool = True,
                          yaml_tag: Optional[str] = None) -> None:
        """Register a YAML object.

        Args:
            register_yaml: Whether to register the class for YAML processing.
                Defaults to True. This doesn't impact the subclasses.
            yaml_tag: The YAML tag. If None, cls.format_yaml_tag will be called
                instead. Ignored if register_yaml is False.

        """
        if register_yaml:
            if yaml_tag is None:
                try:
                    yaml_tag = cls.format_yaml_tag(subcls=cls)
                except NotImplementedError:
                    raise ValueError(f'No YAML tag for {cls}, with '
                                     'register_yaml=True')

            cls.check_yaml_tag(cls, yaml_tag)

            existing = Loader.yaml_constructors.get(yaml_tag)
            if existing is not None:
                if not isinstance(existing, _Constructor):
                    raise ValueError(f'YAML tag {yaml_tag} is already '
                                     f'defined by {existing}.')
                logger.warning(f'YAML tag {yaml_tag} is already defined. '
                               f'Replacing {existing.target_cls}.')

            Loader.add_constructor(tag=yaml_tag,
                                   constructor=_Constructor(target_cls=cls))
            cls.yaml_tag = yaml_tag
            logger.debug(f'Registered YAML tag {yaml_tag} for {cls}.')

        super().__init_subclass__()

    yaml_tag: str

    @classmethod
    def from_node(cls, node: yaml.Node, kwargs: Dict[str, Any]) \
            -> YAMLRegistered:
        """Instantiate the class from a YAML node and its parameters."""
        instance = cls.__new__(cls)
        instance._yaml_input_node = node
        instance._yaml_input_params = dict(kwargs)
        try:
            instance.__init__(**kwargs)  # type: ignore
        except TypeError as e:
            raise TypeError(f'Invalid parameters {kwargs} for '
                            f'{node.tag}: {e}') from e
        return instance

    @classmethod
    def check_yaml_tag(cls, subcls, yaml_tag: str) -> None:
        """Check that a YAML tag is correct for the given subclass."""
        if not yaml_tag.startswith('!'):
            raise ValueError(f'YAML tag should start with "!", but {yaml_tag} '
                             f'doesn\'t')

    @staticmethod
    def format_yaml_tag(subcls) -> str:
        """Format a tag for a subclass."""
        raise NotImplementedError

    @property
    def input_yaml_tag(self) -> str:
        """Return the input tag of the YAML object."""
        return self._yaml_input_node.tag

    @property
    def input_parameters(self) -> Dict[str, Any]:
        """Return the input parameters used to create the YAML object."""
        return self._yaml_input_params

    @property
    def input_hash(self) -> str:
        """Return a hash of the tag and parameters the object came from."""
        params = ','.join(f'{k}={v!r}'
                          for k, v in sorted(self._yaml_input_params.items()))
        return str(uuid5(namespace=MONOLAB_YAML_UUID_NAMESPACE,
                         name=f'{self.input_yaml_tag}({params})'))

    def __repr__(self) -> str:
        """Return the representation of the object."""
        params_string = ','.join(
            f'{k}={v}' for k, v in sorted(self._yaml_input_params.items())
        )
        return f'{self.input_yaml_tag}#{self.input_hash}({params_string})'

    def __str__(self) -> str:
        """Return the short representation of the object."""
        return f'{self.input_yaml_tag}#{self.input_hash[:8]}'


def _plain(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def construct(tag: str, params: Optional[Dict[str, Any]] = None) \
        -> YAMLRegistered:
    """Instantiate the class registered for ``tag`` without YAML text.

    The object gets the same input node, and hence the same input hash, as if
    it had been loaded from ``tag`` with a mapping of ``params``.

    Raises:
        KeyError: If no class is registered for ``tag``.

    """
    constructor = Loader.yaml_constructors.get(tag)
    if not isinstance(constructor, _Constructor):
        raise KeyError(tag)
    params = {k: _plain(v) for k, v in (params or {}).items()}
    node = yaml.SafeDumper(None).represent_data(params)
    node.tag = tag
    return constructor.target_cls.from_node(node, params)


class Dumper(yaml.SafeDumper):
    """YAML dumper that can represent any registered object."""

    def __init__(self, *args, **kwargs) -> None:
        """Initialize the YAML dumper."""
        super().__init__(*args, **kwargs)
        self.add_multi_representer(
            data_type=YAMLRegistered,
            representer=lambda _, obj: obj._yaml_input_node
        )


def get_yaml_tag_mapping(filter_prefix: str = '') \
        -> Dict[str, Type[YAMLRegistered]]:
    """Return a mapping YAML tag → corresponding target class.

    Args:
        filter_prefix: The filter for the prefix of the tag.

    """
    return {
        yaml_tag: constructor.target_cls
        for yaml_tag, constructor in Loader.yaml_constructors.items()
        if (isinstance(constructor, _Constructor)
            and yaml_tag.startswith(filter_prefix))
    }


load = partial(yaml.load, Loader=Loader)
dump = partial(yaml.dump, Dumper=Dumper)
