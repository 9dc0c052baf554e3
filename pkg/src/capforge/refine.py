"""HLP to MLP refinement over a landscape.

Verbs are described by a mapping document (see ``data/mapping.json``) so new
verbs need no code.  Each verb names an enforcement mode:

``all_paths_deny``
    every subject-to-object path needs a capable control;
``any_path_allow``
    one path is chosen and all its capable controls get the rule;
``endpoint_pair``
    the capable controls nearest each end of a path form a tunnel pair;
``all_capable``
    every capable control in the landscape (identity bans are not path-bound).
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from .catalogue import Catalogue
from .errors import (
    AlreadyEnforceable,
    CapforgeError,
    DecisionRequired,
    NoCapableNsfInCatalogue,
    ParseError,
    TemplateSlotUnfillable,
    Uncoverable,
    UnknownVerb,
    UnsupportedOption,
)
from .landscape import Hlp, Landscape, node_cut, node_paths
from .mlp import ActionInstance, ConditionInstance, MlpPolicy, MlpRule, validate_mlp
from .values import parse_value

MODES = ("all_paths_deny", "any_path_allow", "endpoint_pair", "all_capable")
STRATEGIES = ("min_controls", "defense_in_depth", "interactive")


@dataclass(frozen=True)
class SlotSpec:
    capability: str
    slot: str | None = None
    value: object = None
    operation: str = "EQUAL"


@dataclass(frozen=True)
class OptionSpec:
    name: str
    capability: str
    operation: str = "EQUAL"
    implies: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class VerbMapping:
    verb: str
    mode: str
    required_capabilities: frozenset[str]
    conditions: tuple[SlotSpec, ...] = ()
    actions: tuple[SlotSpec, ...] = ()
    options: Mapping[str, OptionSpec] = field(default_factory=dict)
    defaults: Mapping[str, object] = field(default_factory=dict)
    required_options: tuple[str, ...] = ()
    default_action: str | None = None

    def consumed_options(self) -> set[str]:
        return {s.slot.split(":", 1)[1] for s in self.conditions + self.actions if s.slot and s.slot.startswith("option:")}


@dataclass(frozen=True)
class NsfProfile:
    attributes: Mapping[str, str] = field(default_factory=dict)
    actions: tuple[ActionInstance, ...] = ()


@dataclass(frozen=True)
class RefinementMapping:
    verbs: Mapping[str, VerbMapping]
    profiles: Mapping[str, NsfProfile] = field(default_factory=dict)

    def verb(self, name: str) -> VerbMapping:
        try:
            return self.verbs[name]
        except KeyError:
            raise UnknownVerb(f"verb {name!r} is not in the mapping", verb=name) from None


@dataclass(frozen=True, order=True)
class Control:
    node: str
    nsf: str

    @property
    def key(self) -> str:
        return f"{self.node}:{self.nsf}"


@dataclass(frozen=True)
class PathCandidates:
    path: tuple[str, ...]
    controls: tuple[Control, ...]

    def to_doc(self) -> dict:
        return {"path": list(self.path), "controls": [{"node": c.node, "nsf": c.nsf} for c in self.controls]}


@dataclass(frozen=True)
class Candidates:
    mode: str
    required: frozenset[str]
    per_path: tuple[PathCandidates, ...]

    def to_doc(self) -> dict:
        return {"mode": self.mode, "required": sorted(self.required), "paths": [p.to_doc() for p in self.per_path]}


@dataclass(frozen=True)
class Selection:
    controls: tuple[Control, ...]
    # endpoint_pair only: (subject side, object side)
    pairs: tuple[tuple[Control, Control], ...] = ()
    # any_path_allow only: paths with candidates that were not chosen
    alternates: tuple[int, ...] = ()

    def to_doc(self) -> dict:
        doc: dict = {"controls": [{"node": c.node, "nsf": c.nsf} for c in self.controls]}
        if self.pairs:
            doc["pairs"] = [[a.key, b.key] for a, b in self.pairs]
        if self.alternates:
            doc["alternatePaths"] = list(self.alternates)
        return doc


@dataclass(frozen=True)
class Proposal:
    node: str
    nsf: str
    paths: tuple[int, ...]

    def to_doc(self) -> dict:
        return {"node": self.node, "nsf": self.nsf, "paths": list(self.paths)}


@dataclass
class HlpResult:
    hlp: Hlp
    priority: int
    status: str = "unenforceable"
    required: frozenset[str] = frozenset()
    candidates: Candidates | None = None
    selection: Selection | None = None
    mlps: dict[str, MlpPolicy] = field(default_factory=dict)
    proposals: list[Proposal] = field(default_factory=list)
    error: CapforgeError | None = None

    def to_doc(self) -> dict:
        doc: dict = {
            "hlp": self.hlp.to_doc(),
            "priority": self.priority,
            "status": self.status,
            "required": sorted(self.required),
            "candidates": self.candidates.to_doc() if self.candidates else None,
            "selection": self.selection.to_doc() if self.selection else None,
            "mlps": sorted(self.mlps),
            "proposals": [p.to_doc() for p in self.proposals],
        }
        if self.error is not None:
            doc["error"] = self.error.as_payload()
        return doc


@dataclass
class RefinementResult:
    results: list[HlpResult]
    mlps: dict[str, MlpPolicy]

    def to_doc(self) -> dict:
        return {
            "results": [r.to_doc() for r in self.results],
            "mlps": {k: self.mlps[k].to_doc() for k in sorted(self.mlps)},
        }


# -- mapping document ----------------------------------------------------------


def _slot(doc: object, path: str) -> SlotSpec:
    if not isinstance(doc, dict) or not isinstance(doc.get("capability"), str):
        raise ParseError("template entry needs a capability", path=path)
    return SlotSpec(doc["capability"], doc.get("slot"), doc.get("value"), doc.get("operation", "EQUAL"))


def load_mapping(document: Mapping | str | Path) -> RefinementMapping:
    if not isinstance(document, Mapping):
        path = Path(document)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParseError("mapping file not found", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=str(path), line=exc.lineno, column=exc.colno) from None
    verbs = {}
    for name, v in dict(document.get("verbs", {})).items():
        where = f"mapping.verbs.{name}"
        if not isinstance(v, dict):
            raise ParseError("verb must be an object", path=where)
        mode = v.get("mode")
        if mode not in MODES:
            raise ParseError(f"mode must be one of {MODES}", path=f"{where}.mode")
        required = frozenset(v.get("requiredCapabilities", []))
        conds = tuple(_slot(s, f"{where}.conditions[{i}]") for i, s in enumerate(v.get("conditions", [])))
        acts = tuple(_slot(s, f"{where}.actions[{i}]") for i, s in enumerate(v.get("actions", [])))
        for s in conds + acts:
            if s.capability not in required:
                raise ParseError(f"template capability {s.capability} is not among the required capabilities", path=where)
        options = {}
        for oname, o in dict(v.get("options", {})).items():
            if not isinstance(o, dict) or not isinstance(o.get("capability"), str):
                raise ParseError("option needs a capability", path=f"{where}.options.{oname}")
            options[oname] = OptionSpec(oname, o["capability"], o.get("operation", "EQUAL"), MappingProxyType(dict(o.get("implies", {}))))
        verbs[name] = VerbMapping(
            verb=name,
            mode=mode,
            required_capabilities=required,
            conditions=conds,
            actions=acts,
            options=MappingProxyType(options),
            defaults=MappingProxyType(dict(v.get("defaults", {}))),
            required_options=tuple(v.get("requiredOptions", [])),
            default_action=v.get("defaultAction"),
        )
    profiles = {}
    for nsf, p in dict(document.get("nsfProfiles", {})).items():
        acts = tuple(ActionInstance(a["capability"], a.get("value")) for a in p.get("actions", []))
        profiles[nsf] = NsfProfile(MappingProxyType(dict(p.get("attributes", {}))), acts)
    return RefinementMapping(MappingProxyType(verbs), MappingProxyType(profiles))


# -- operations ----------------------------------------------------------------


def _effective_options(hlp: Hlp, verb: VerbMapping) -> dict[str, object]:
    allowed = set(verb.options) | verb.consumed_options() | set(verb.defaults)
    for name in hlp.options:
        if name not in allowed:
            raise UnsupportedOption(f"option {name!r} is not supported by verb {verb.verb!r}", option=name, verb=verb.verb)
    opts = {**verb.defaults, **hlp.options}
    for name in list(hlp.options):
        spec = verb.options.get(name)
        if spec is not None:
            for implied, value in spec.implies.items():
                opts.setdefault(implied, value)
    return opts


def required_capabilities(hlp: Hlp, mapping: RefinementMapping) -> frozenset[str]:
    verb = mapping.verb(hlp.action)
    opts = _effective_options(hlp, verb)
    extra = {verb.options[o].capability for o in opts if o in verb.options}
    return verb.required_capabilities | extra


def _capable_nsf(node_nsfs: tuple[str, ...], required: frozenset[str], catalogue: Catalogue) -> str | None:
    for nsf in sorted(node_nsfs):
        r = catalogue.resolved(nsf)
        if r.deployable and r.capabilities >= required:
            return nsf
    return None


def candidate_controls(hlp: Hlp, landscape: Landscape, catalogue: Catalogue, mapping: RefinementMapping) -> Candidates:
    verb = mapping.verb(hlp.action)
    required = required_capabilities(hlp, mapping)
    capable = {}
    for node_id, node in landscape.nodes.items():
        nsf = _capable_nsf(node.nsfs, required, catalogue)
        if nsf is not None:
            capable[node_id] = Control(node_id, nsf)
    if verb.mode == "all_capable":
        return Candidates(verb.mode, required, (PathCandidates((), tuple(capable[n] for n in sorted(capable))),))
    src = landscape.resolve(hlp.subject).node
    dst = landscape.resolve(hlp.object).node
    per_path = []
    seen_pairs = set()
    for path in node_paths(landscape, src, dst):
        controls = tuple(capable[n] for n in path if n in capable)
        if verb.mode == "endpoint_pair":
            controls = (controls[0], controls[-1]) if len(controls) >= 2 else ()
            if controls and controls in seen_pairs:
                continue
            seen_pairs.add(controls)
        per_path.append(PathCandidates(path, controls))
    return Candidates(verb.mode, required, tuple(per_path))


Decide = Callable[[str, list], object]


def _ask(decide: Decide | None, kind: str, choices: list) -> object:
    if decide is None:
        raise DecisionRequired(f"a {kind} must be chosen among {len(choices)} options", kind=kind)
    return decide(kind, choices)


def select_controls(candidates: Candidates, strategy: str = "min_controls", decide: Decide | None = None) -> Selection:
    """Pick controls; ``decide(kind, choices)`` answers interactive questions
    (kind is ``control``, ``path`` or ``pair``) and returns one of the choices."""
    if strategy not in STRATEGIES:
        raise CapforgeError(f"unknown strategy {strategy!r}", strategy=strategy)
    per_path = candidates.per_path
    mode = candidates.mode
    if mode == "all_paths_deny":
        uncovered = [i for i, p in enumerate(per_path) if not p.controls]
        if uncovered or not per_path:
            raise Uncoverable("some subject-to-object paths have no capable control", uncovered)
        if strategy == "defense_in_depth":
            return Selection(tuple(sorted({c for p in per_path for c in p.controls})))
        chosen: set[Control] = set()
        unhit = set(range(len(per_path)))
        while unhit:
            if strategy == "interactive":
                i = min(unhit)
                options = list(per_path[i].controls)
                pick = options[0] if len(options) == 1 else _ask(decide, "control", options)
                if pick not in options:
                    raise CapforgeError("decision is not one of the offered controls")
            else:
                hits: dict[Control, int] = {}
                for i in unhit:
                    for c in per_path[i].controls:
                        hits[c] = hits.get(c, 0) + 1
                pick = min(hits, key=lambda c: (-hits[c], c.node, c.nsf))
            chosen.add(pick)
            unhit = {i for i in unhit if pick not in per_path[i].controls}
        return Selection(tuple(sorted(chosen)))
    coverable = [i for i, p in enumerate(per_path) if p.controls]
    if not coverable:
        raise Uncoverable("no path has a capable control", list(range(len(per_path))))
    if mode == "all_capable":
        return Selection(tuple(sorted(per_path[0].controls)))
    if mode == "endpoint_pair":
        pairs = [per_path[i].controls for i in coverable]
        if strategy == "defense_in_depth":
            picked = pairs
        elif strategy == "interactive" and len(pairs) > 1:
            choice = _ask(decide, "pair", pairs)
            if choice not in pairs:
                raise CapforgeError("decision is not one of the offered pairs")
            picked = [choice]
        else:
            picked = pairs[:1]
        controls = tuple(sorted({c for pair in picked for c in pair}))
        return Selection(controls, tuple((a, b) for a, b in picked))
    # any_path_allow
    if strategy == "defense_in_depth":
        return Selection(tuple(sorted({c for i in coverable for c in per_path[i].controls})))
    if strategy == "interactive" and len(coverable) > 1:
        choice = _ask(decide, "path", [per_path[i] for i in coverable])
        chosen_index = next((i for i in coverable if per_path[i] == choice), None)
        if chosen_index is None:
            raise CapforgeError("decision is not one of the offered paths")
    else:
        chosen_index = min(coverable, key=lambda i: (len(per_path[i].controls), i))
    alternates = tuple(i for i in coverable if i != chosen_index)
    return Selection(tuple(sorted(set(per_path[chosen_index].controls))), alternates=alternates)


def _values_for(raw: object, capability: str, catalogue: Catalogue) -> tuple:
    items = raw if isinstance(raw, (list, tuple)) else str(raw).split(",") if isinstance(raw, str) else [raw]
    vt = catalogue.capability(capability).value_type
    out = []
    for item in items:
        if isinstance(item, str):
            item = item.strip()
            if vt in ("port-number", "integer") and item.lstrip("-").isdigit():
                item = int(item)
        out.append(parse_value(item, f"option value for {capability}"))
    return tuple(out)


def _fill(spec: SlotSpec, hlp: Hlp, opts: Mapping, landscape: Landscape, pair: tuple[Control, Control] | None, me: Control):
    slot = spec.slot
    if slot is None:
        return spec.value
    if slot == "subject":
        return landscape.resolve(hlp.subject).address
    if slot == "object":
        return landscape.resolve(hlp.object).address
    if slot.startswith("option:"):
        name = slot.split(":", 1)[1]
        if name not in opts:
            raise TemplateSlotUnfillable(f"option {name!r} is needed to fill the template", slot=slot)
        return opts[name]
    if slot in ("local_gateway", "remote_gateway"):
        if pair is None:
            raise TemplateSlotUnfillable(f"slot {slot} needs an endpoint pair", slot=slot)
        other = pair[1] if me == pair[0] else pair[0]
        node = landscape.nodes[me.node if slot == "local_gateway" else other.node]
        if node.address is None:
            raise TemplateSlotUnfillable(f"gateway {node.id} has no address", slot=slot, node=node.id)
        return node.address
    raise TemplateSlotUnfillable(f"unknown template slot {slot!r}", slot=slot)


def _rule_for(
    hlp: Hlp,
    priority: int,
    control: Control,
    pair: tuple[Control, Control] | None,
    mapping: RefinementMapping,
    landscape: Landscape,
    catalogue: Catalogue,
) -> MlpRule:
    verb = mapping.verb(hlp.action)
    opts = _effective_options(hlp, verb)
    for name in verb.required_options:
        if name not in opts:
            raise TemplateSlotUnfillable(f"verb {verb.verb!r} needs option {name!r}", slot=f"option:{name}")
    conds = []
    for spec in verb.conditions:
        raw = _fill(spec, hlp, opts, landscape, pair, control)
        conds.append(ConditionInstance(spec.capability, spec.operation, _values_for(raw, spec.capability, catalogue)))
    for name, spec in verb.options.items():
        if name in opts:
            conds.append(ConditionInstance(spec.capability, spec.operation, _values_for(opts[name], spec.capability, catalogue)))
    profile = mapping.profiles.get(control.nsf, NsfProfile())
    acts = list(profile.actions)
    for spec in verb.actions:
        value = _fill(spec, hlp, opts, landscape, pair, control)
        acts.append(ActionInstance(spec.capability, value))
    return MlpRule(
        id=f"hlp-{priority}",
        conditions=tuple(conds),
        actions=tuple(acts),
        external_data={"priority": str(priority)},
        description=f"{hlp.subject} {hlp.action} {hlp.object}",
    )


def generate_mlps(
    hlp: Hlp,
    selection: Selection,
    mapping: RefinementMapping,
    landscape: Landscape,
    catalogue: Catalogue,
    priority: int = 1,
) -> dict[str, MlpPolicy]:
    """One single-rule MLP per selected control, keyed ``node:nsf``."""
    verb = mapping.verb(hlp.action)
    pair_of = {}
    for pair in selection.pairs:
        for c in pair:
            pair_of.setdefault(c, pair)
    out = {}
    for control in selection.controls:
        rule = _rule_for(hlp, priority, control, pair_of.get(control), mapping, landscape, catalogue)
        profile = mapping.profiles.get(control.nsf, NsfProfile())
        default = ActionInstance(verb.default_action) if verb.default_action else None
        out[control.key] = MlpPolicy(control.nsf, (rule,), dict(profile.attributes), default)
    return out


def _placement(landscape: Landscape, path: tuple[str, ...], cut: frozenset[str]) -> str:
    interior = list(path[1:-1]) or list(path)
    nearest_first = list(reversed(interior))
    tiers = (
        [n for n in nearest_first if n in cut and landscape.nodes[n].kind == "nsf-node"],
        [n for n in nearest_first if landscape.nodes[n].kind == "nsf-node"],
        [n for n in nearest_first if n in cut],
        nearest_first,
    )
    for tier in tiers:
        if tier:
            return tier[0]
    return path[-1]


def propose_additions(hlp: Hlp, landscape: Landscape, catalogue: Catalogue, mapping: RefinementMapping) -> list[Proposal]:
    """Catalogue NSFs able to enforce ``hlp``, placed on the uncovered paths:
    on a cut node nearest the object when there is one."""
    required = required_capabilities(hlp, mapping)
    capable = [n for n in catalogue.nsf_ids if catalogue.resolved(n).deployable and catalogue.resolved(n).capabilities >= required]
    if not capable:
        raise NoCapableNsfInCatalogue(f"no catalogue NSF owns {', '.join(sorted(required))}", required=sorted(required))
    candidates = candidate_controls(hlp, landscape, catalogue, mapping)
    if candidates.mode == "all_paths_deny":
        uncovered = [i for i, p in enumerate(candidates.per_path) if not p.controls]
    else:
        uncovered = [] if any(p.controls for p in candidates.per_path) else list(range(len(candidates.per_path)))
    if not uncovered:
        raise AlreadyEnforceable("the policy is already enforceable with installed controls")
    src = landscape.resolve(hlp.subject).node
    dst = landscape.resolve(hlp.object).node
    cut = node_cut(landscape, src, dst)
    placed: dict[str, list[int]] = {}
    for i in uncovered:
        node = _placement(landscape, candidates.per_path[i].path, cut)
        placed.setdefault(node, []).append(i)
    return [Proposal(node, nsf, tuple(idx)) for node, idx in sorted(placed.items()) for nsf in capable]


def refine_one(
    hlp: Hlp,
    priority: int,
    landscape: Landscape,
    catalogue: Catalogue,
    mapping: RefinementMapping,
    strategy: str = "min_controls",
    decide: Decide | None = None,
) -> HlpResult:
    result = HlpResult(hlp, priority)
    try:
        result.required = required_capabilities(hlp, mapping)
        result.candidates = candidate_controls(hlp, landscape, catalogue, mapping)
        result.selection = select_controls(result.candidates, strategy, decide)
        result.mlps = generate_mlps(hlp, result.selection, mapping, landscape, catalogue, priority)
        for key, policy in result.mlps.items():
            errors = [d for d in validate_mlp(policy, catalogue.resolved(policy.nsf_name)) if d.severity == "error"]
            if errors:
                raise TemplateSlotUnfillable(f"generated MLP for {key} is invalid: {errors[0].message}", control=key)
        result.status = "enforced"
    except Uncoverable as exc:
        result.error = exc
        try:
            result.proposals = propose_additions(hlp, landscape, catalogue, mapping)
            result.status = "unenforceable_with_proposal"
        except (NoCapableNsfInCatalogue, AlreadyEnforceable):
            result.status = "unenforceable"
    except DecisionRequired as exc:
        result.error = exc
        result.status = "needs_decision"
    except CapforgeError as exc:
        result.error = exc
        result.status = "unenforceable"
    return result


def merge_mlps(target: dict[str, MlpPolicy], new: Mapping[str, MlpPolicy]) -> None:
    for key, policy in new.items():
        if key in target:
            old = target[key]
            target[key] = MlpPolicy(old.nsf_name, old.rules + policy.rules, {**policy.policy_attributes, **old.policy_attributes}, old.default_action or policy.default_action)
        else:
            target[key] = policy


def refine(
    hlps: list[Hlp],
    landscape: Landscape,
    catalogue: Catalogue,
    mapping: RefinementMapping,
    strategy: str = "min_controls",
    decide: Decide | None = None,
) -> RefinementResult:
    """Refine every statement; priorities follow document order from 1."""
    results = []
    merged: dict[str, MlpPolicy] = {}
    for index, hlp in enumerate(hlps, start=1):
        res = refine_one(hlp, index, landscape, catalogue, mapping, strategy, decide)
        merge_mlps(merged, res.mlps)
        results.append(res)
    return RefinementResult(results, merged)
