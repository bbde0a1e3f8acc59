"""Region tables mapping label codes to named, hemisphere-merged ROIs.

File format: one entry per line, ``code<TAB>name<TAB>group<TAB>merge_key``,
with an optional fifth column ``icv`` (``yes``/``no``) that controls whether
the code contributes to intracranial volume. ``#`` starts a comment.
"""

from dataclasses import dataclass
from importlib import resources

from ..exceptions import InputError

GROUPS = ("subcortical", "cortical")


@dataclass(frozen=True)
class RegionEntry:
    code: int
    name: str
    group: str
    merge_key: str
    in_icv: bool = True


class RegionTable:
    """Ordered, validated collection of :class:`RegionEntry`.

    The order of first appearance of each merge key is preserved and used
    for every per-region output so reports line up across runs.
    """

    def __init__(self, entries=()):
        entries = tuple(entries)
        codes = {}
        key_group = {}
        for e in entries:
            if e.code <= 0:
                raise InputError(f"region code must be positive, got {e.code}")
            if e.code in codes:
                raise InputError(f"duplicate region code {e.code}")
            if not e.merge_key:
                raise InputError(f"empty merge_key for code {e.code}")
            if e.group not in GROUPS:
                raise InputError(f"unknown group {e.group!r} for code {e.code}")
            if key_group.setdefault(e.merge_key, e.group) != e.group:
                raise InputError(f"merge_key {e.merge_key!r} spans both groups")
            codes[e.code] = e
        self.entries = entries
        self._by_code = codes
        self._key_group = key_group

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        return isinstance(other, RegionTable) and self.entries == other.entries

    def __repr__(self):
        return f"RegionTable({len(self.entries)} codes, {len(self.merge_keys)} ROIs)"

    @property
    def codes(self):
        return tuple(self._by_code)

    @property
    def merge_keys(self):
        return tuple(self._key_group)

    def group_of(self, merge_key):
        return self._key_group[merge_key]

    def keys_in_group(self, group):
        return tuple(k for k, g in self._key_group.items() if g == group)

    def lookup(self, code):
        return self._by_code.get(int(code))

    def codes_for(self, merge_key):
        return tuple(e.code for e in self.entries if e.merge_key == merge_key)

    def icv_excluded_codes(self):
        return tuple(e.code for e in self.entries if not e.in_icv)

    @classmethod
    def from_text(cls, text):
        entries = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) not in (4, 5):
                raise InputError(f"region table line {lineno}: expected 4 or 5 tab-separated fields")
            try:
                code = int(parts[0])
            except ValueError:
                raise InputError(f"region table line {lineno}: bad code {parts[0]!r}") from None
            in_icv = True
            if len(parts) == 5:
                flag = parts[4].lower()
                if flag not in ("yes", "no"):
                    raise InputError(f"region table line {lineno}: icv flag must be yes/no")
                in_icv = flag == "yes"
            entries.append(RegionEntry(code, parts[1], parts[2], parts[3], in_icv))
        return cls(entries)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        lines = ["# code\tname\tgroup\tmerge_key\ticv"]
        for e in self.entries:
            lines.append(f"{e.code}\t{e.name}\t{e.group}\t{e.merge_key}\t{'yes' if e.in_icv else 'no'}")
        return "\n".join(lines) + "\n"


def default_region_table():
    """FreeSurfer/SynthSeg codes merged into 16 subcortical and 33 cortical ROIs."""
    text = resources.files("mrigen_eval").joinpath("data/default_regions.tsv").read_text("utf-8")
    return RegionTable.from_text(text)
