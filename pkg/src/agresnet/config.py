"""Flat key/value configuration files.

One ``key = value`` pair per line, ``#`` comments. Values are typed:
integers, floats, true/false, comma-separated integer lists, and bare
strings.
"""


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [int(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"config line {lineno} has an empty key")
        if key in values:
            raise ValueError(f"config line {lineno} repeats key {key!r}")
        values[key] = parse_value(value)
    return values


def load_config_file(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())
