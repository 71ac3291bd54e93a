"""Versioned key/value + list text format shared by scenario and config files.

    smarttrap-scenario 1          <- header: kind and version
    # comment
    key = value
    [section]                     <- list section; one whitespace-separated row per line
    -21.2500 -45.5000
"""

from __future__ import annotations

from dataclasses import dataclass, field


class KvFormatError(ValueError):
    pass


@dataclass
class KvDocument:
    kind: str
    version: int
    values: dict[str, str] = field(default_factory=dict)
    sections: dict[str, list[list[str]]] = field(default_factory=dict)


def parse(text: str, kind: str, versions=(1,)) -> KvDocument:
    lines = text.splitlines()
    body = [(n, ln.strip()) for n, ln in enumerate(lines, 1)]
    body = [(n, ln) for n, ln in body if ln and not ln.startswith("#")]
    if not body:
        raise KvFormatError(f"empty file; expected header '{kind} <version>'")
    n, head = body[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != kind:
        raise KvFormatError(f"line {n}: expected header '{kind} <version>', got {head!r}")
    try:
        version = int(parts[1])
    except ValueError:
        raise KvFormatError(f"line {n}: bad version {parts[1]!r}") from None
    if version not in versions:
        raise KvFormatError(f"line {n}: unsupported {kind} version {version}")
    doc = KvDocument(kind, version)
    section = None
    for n, ln in body[1:]:
        if ln.startswith("[") and ln.endswith("]"):
            section = ln[1:-1].strip()
            if not section or section in doc.sections:
                raise KvFormatError(f"line {n}: empty or repeated section [{section}]")
            doc.sections[section] = []
        elif section is not None:
            doc.sections[section].append(ln.split())
        elif "=" in ln:
            key, _, value = ln.partition("=")
            key = key.strip()
            if key in doc.values:
                raise KvFormatError(f"line {n}: duplicate key {key!r}")
            doc.values[key] = value.strip()
        else:
            raise KvFormatError(f"line {n}: expected 'key = value', got {ln!r}")
    return doc


def dump(doc: KvDocument) -> str:
    out = [f"{doc.kind} {doc.version}"]
    out += [f"{k} = {v}" for k, v in doc.values.items()]
    for name, rows in doc.sections.items():
        out.append(f"[{name}]")
        out += [" ".join(r) for r in rows]
    return "\n".join(out) + "\n"
