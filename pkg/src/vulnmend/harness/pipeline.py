"""The per-instance resolution pipeline.

Stage order: optional context agent, optional property-analysis agent,
enhanced-report assembly, file and element localization, patch
generation, per-candidate validation, selection, artifact persistence.
Stage failures degrade the run (recorded in telemetry) instead of
aborting it; a run with no winning patch still produces its artifacts
and an empty prediction.

Artifacts are deterministic by construction: no timestamps, no absolute
paths, sorted JSON keys. Two runs from the same inputs and the same
replay script write identical bytes.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

from ..agents.cpc import run_cpc_agent
from ..agents.reports import EnhancedIssueReport
from ..agents.spa import install_assert_prelude, run_spa_agent
from ..edit_engine import EditHistory
from ..errors import (ReplayDesync, SandboxUnavailable, ScriptExhausted,
                      VulnmendError)
from ..execution import LocalSandbox, LogStore, PocRunner, PythonScriptSandbox
from ..llm import LLMBackend
from ..localization import (localize_elements, localize_files_prompt,
                            localize_files_retrieval, merge_rankings)
from ..repair import (Normalizer, build_patch_context, generate_patches,
                      select_patch, validate_candidate)
from ..symbol_analysis import make_symbol_backend
from .config import RunConfig
from .instances import IssueInstance
from .metrics import cost_of_records
from .telemetry import transcript_summary


@dataclass
class InstanceResult:
    instance_id: str
    instance_dir: Path
    prediction: str
    winner: int | None
    errors: list


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class _Stage:
    """Collects per-stage failures without stopping the pipeline."""

    def __init__(self):
        self.errors: list[dict] = []

    def run(self, name: str, fn, fallback=None):
        try:
            return fn()
        except (ReplayDesync, ScriptExhausted):
            # a replay mismatch means the test script and the pipeline
            # disagree; degrading would hide exactly what it must expose
            raise
        except VulnmendError as exc:
            self.errors.append({"stage": name,
                                "error": f"{type(exc).__name__}: {exc}"})
            return fallback
        except (OSError, ValueError, KeyError) as exc:
            self.errors.append({"stage": name,
                                "error": f"{type(exc).__name__}: {exc}"})
            return fallback


def run_instance(instance: IssueInstance, config: RunConfig,
                 llm: LLMBackend, out_dir: Path | str) -> InstanceResult:
    """Resolve one instance into out_dir/<instance_id>/."""
    config.validate()
    if instance.workspace_path is None:
        raise SandboxUnavailable(
            f"{instance.instance_id}: the built-in pipeline works on "
            "directory workspaces; image workspaces need a container "
            "runtime and a local checkout")

    instance_dir = Path(out_dir) / instance.instance_id
    if instance_dir.exists():
        shutil.rmtree(instance_dir)
    workspace = instance_dir / "workspace"
    base = instance_dir / "base"
    shutil.copytree(instance.workspace_path, workspace)

    stage = _Stage()
    records_start = len(getattr(llm, "records", []) or [])

    if config.input_type == "sanitizer_log":
        if instance.sanitizer_log:
            issue_text = instance.sanitizer_log
        else:
            stage.errors.append({
                "stage": "input",
                "error": "input_type is sanitizer_log but the instance "
                         "has none; using the issue report"})
            issue_text = instance.issue_report
    else:
        issue_text = instance.issue_report

    sandbox = LocalSandbox(workspace)
    if config.enable_spa:
        # before the baseline commit and the pristine copy, so rollbacks
        # keep it and prediction diffs never mention it
        install_assert_prelude(sandbox)
    shutil.copytree(workspace, base)

    log_store = LogStore()
    history = EditHistory(workspace)
    runner = PocRunner(
        sandbox, instance.repro_command, log_store=log_store,
        head_lines=config.log_head_lines, tail_lines=config.log_tail_lines,
        timeout=config.poc_timeout)
    script_sandbox = PythonScriptSandbox(
        log_provider=log_store.get, output_cap=config.script_output_cap)
    symbols = make_symbol_backend(workspace, lsp_command=None,
                                  language_id=instance.language)

    telemetry: dict = {"instance_id": instance.instance_id,
                       "agents": {}, "stages": {}}

    context_report = None
    if config.enable_cpc:
        cpc_out = stage.run("cpc", lambda: run_cpc_agent(
            llm, workspace, symbols, issue_text,
            max_steps=config.cpc_max_steps))
        if cpc_out is not None:
            context_report, transcript = cpc_out
            telemetry["agents"]["cpc"] = transcript_summary(transcript)
            telemetry["agents"]["cpc"]["report_parse_ok"] = \
                context_report.parse_ok

    property_report = None
    if config.enable_spa:
        spa_issue = issue_text
        if context_report is not None:
            spa_issue = EnhancedIssueReport(
                issue_text=issue_text,
                context_report=context_report).render()
        spa_out = stage.run("spa", lambda: run_spa_agent(
            llm, workspace, symbols, history, runner, script_sandbox,
            spa_issue, max_steps=config.spa_max_steps))
        if spa_out is not None:
            property_report, transcript = spa_out
            telemetry["agents"]["spa"] = transcript_summary(transcript)
            telemetry["agents"]["spa"]["report_parse_ok"] = \
                property_report.parse_ok

    enhanced = EnhancedIssueReport(issue_text=issue_text,
                                   context_report=context_report,
                                   property_report=property_report)
    enhanced_text = enhanced.render()
    _write(instance_dir / "reports" / "enhanced.md", enhanced_text)
    if context_report is not None:
        _write(instance_dir / "reports" / "context.md",
               context_report.render())
    if property_report is not None:
        _write(instance_dir / "reports" / "property.md",
               property_report.render())

    has_reports = context_report is not None or property_report is not None

    loc_text = (enhanced_text
                if has_reports and "localization" in config.enhance_stages
                else issue_text)
    prompt_files = stage.run("localize_files", lambda: localize_files_prompt(
        llm, workspace, loc_text, config.top_files), fallback=[])
    retrieval_files = stage.run(
        "localize_retrieval", lambda: localize_files_retrieval(
            llm, workspace, loc_text, config.top_files,
            chunk_lines=config.chunk_lines), fallback=[])
    merged = merge_rankings(prompt_files, retrieval_files, config.top_files)
    element_loc = stage.run("localize_elements", lambda: localize_elements(
        llm, workspace, merged, loc_text, limit=config.element_limit))
    selections = element_loc.selections if element_loc is not None else ()

    _write_json(instance_dir / "rankings" / "files.json", {
        "prompt": prompt_files,
        "retrieval": retrieval_files,
        "merged": merged,
    })
    _write_json(instance_dir / "rankings" / "elements.json", [{
        "file": sel.file,
        "id": sel.element.qualified_name,
        "kind": sel.element.kind.value,
        "start_line": sel.element.start_line,
        "end_line": sel.element.end_line,
    } for sel in selections])
    telemetry["stages"]["localization"] = {
        "enhanced_input": loc_text is enhanced_text,
        "prompt_files": len(prompt_files),
        "retrieval_files": len(retrieval_files),
        "elements": len(selections),
        "element_parse_ok": (element_loc.parse_ok
                             if element_loc is not None else False),
    }

    context = build_patch_context(
        workspace, selections,
        whole_files=merged if not selections else None,
        margin=config.context_margin)

    gen_text = (enhanced_text
                if has_reports and "generation" in config.enhance_stages
                else issue_text)
    candidates = stage.run("generate", lambda: generate_patches(
        llm, gen_text, context, t=config.candidates), fallback=[])

    outcomes = []
    normalizer = Normalizer()
    for candidate in candidates:
        _write(instance_dir / "candidates" / f"candidate-{candidate.index}.md",
               candidate.raw_text)
        outcome = stage.run(
            f"validate-{candidate.index}",
            lambda c=candidate: validate_candidate(
                c, history, runner, base, workspace, normalizer=normalizer))
        if outcome is None:
            continue
        outcomes.append(outcome)
        if outcome.applied:
            _write(instance_dir / "candidates"
                   / f"candidate-{outcome.index}.diff", outcome.diff)
    _write_json(instance_dir / "candidates" / "outcomes.json", [{
        "index": o.index,
        "applied": o.applied,
        "compiled": o.compiled,
        "sanitizer_triggered": o.sanitizer_triggered,
        "poc_pass": o.poc_pass,
        "fingerprint": o.fingerprint,
        "failure": o.failure,
    } for o in outcomes])

    selection = select_patch(outcomes, config.selection_strategy)
    by_index = {o.index: o for o in outcomes}
    prediction = (by_index[selection.winner].diff
                  if selection.winner is not None else "")
    _write(instance_dir / "prediction.diff", prediction)

    telemetry["stages"]["generation"] = {
        "enhanced_input": gen_text is enhanced_text,
        "candidates": len(candidates),
        "applied": sum(1 for o in outcomes if o.applied),
        "poc_pass": sum(1 for o in outcomes if o.poc_pass),
    }
    telemetry["selection"] = {
        "strategy": selection.strategy,
        "winner": selection.winner,
        "pool": list(selection.pool),
        "group_sizes": dict(sorted(selection.group_sizes.items())),
        "reason": selection.reason,
    }
    telemetry["errors"] = stage.errors
    _write_json(instance_dir / "telemetry.json", telemetry)

    records = getattr(llm, "records", None)
    if records is not None:
        _write_json(instance_dir / "cost.json",
                    cost_of_records(records[records_start:], config))

    symbols.shutdown()
    sandbox.close()
    if not config.keep_workspaces:
        # scratch trees carry volatile state (git metadata, build
        # artifacts); dropping them leaves only reproducible artifacts
        shutil.rmtree(workspace, ignore_errors=True)
        shutil.rmtree(base, ignore_errors=True)
    return InstanceResult(
        instance_id=instance.instance_id, instance_dir=instance_dir,
        prediction=prediction, winner=selection.winner,
        errors=stage.errors)


def run_all(instances, config: RunConfig, backend_for,
            out_dir: Path | str) -> list[InstanceResult]:
    """Run every instance; backend_for(instance_id) supplies its model."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", config.to_dict())
    results = []
    for instance in instances:
        results.append(run_instance(instance, config,
                                    backend_for(instance.instance_id),
                                    out_dir))
    return results
