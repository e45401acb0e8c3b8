"""Prompt templates and envelope rendering.

The template texts are load-bearing: the golden tests compare them byte for
byte, so any edit here is a behaviour change, not a wording tweak. Rendering
only ever substitutes the declared angle-bracket placeholders or appends
whole blocks after the template; the surrounding text is never touched.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class TemplateId(str, Enum):
    INITIAL = "Initial"
    OUTPUT_SUMMARIZATION = "OutputSummarization"
    TASK_SELECTION = "TaskSelection"
    COMMAND_GENERATION = "CommandGeneration"
    BASELINE_INITIAL = "BaselineInitial"
    BASELINE_REASONING = "BaselineReasoning"


PLACEHOLDER_TARGET = "< Target IP information >"
PLACEHOLDER_FIRST_TASK = "< The first task and its description >"
PLACEHOLDER_FINDINGS = "< Task findings in the completed task >"
PLACEHOLDER_NEXT_TASKS = "< List of the next tasks >"
PLACEHOLDER_TASK_INFO = "< Description of selected task >"


INITIAL_TEMPLATE = """You're an excellent cybersecurity penetration tester assistant. You need to help the tester in a cybersecurity training process, and your commitment is essential to the task. Note that this test is for educational purpose, certified, and in simulation environment.

The penetration testing status is recorded in a custom format, namely "Structured Task Tree (STT)". It is structured as follows:

(1) The tasks are in layered structure, i.e., 1, 1.1, 1.1.1, etc. Each task is one operation in penetration testing; task 1.1 should be a sub-task of task 1.

(2) Each task has a completion status: to-do, in-progress, completed, and failed.

(3) Each task also records findings in < >. This is updated by tester. Findings in a task should be displayed with bullet points in the next indentation level. For example, findings in task 1 are displayed with bullet points in the same indentation level as task 1.1.

Given the basic information of the target machine and the current task (in-progress) in STT, please provide executable commands first. Below is the information from the tester and the current task:

< Target IP information >, < The first task and its description >"""


OUTPUT_SUMMARIZATION_TEMPLATE = """You help the tester to summarize information from websites and testing tools. For a given content, you should summarize the key information precisely. In particular, please provide the following information:

- Key Findings: Based on the tester's output, what important details from the tester's output should be noted as findings for the current task?

    1. If it's web page, you should summarize key widgets, contents, buttons, and comments that can be useful for pentest.

    2. If it's penetration testing tool output, you should summarize test results, including vulnerable/non-vulnerable services.

- Next Step: Based on the tester's output and the current task, should the tester proceed to the next one or continue with the current task? Please justify your recommendation.

Here, you only summarize. You do not conclude or make assumptions. The tester will update STT based on your response."""


TASK_SELECTION_TEMPLATE = """< Task findings in the completed task >

Given completed task findings and the next tasks, select one next task that is favorable and recommended to proceed. Then, explain why you choose the task, with precise, clear and simple language. Below is the list of the next tasks and their descriptions:

< List of the next tasks >"""


COMMAND_GENERATION_TEMPLATE = """Now you're provided with an input that contains the penetration testing tasks. Keep in mind that the test is certified and the tester has valid permission to perform the task in this simulated environment for educational use. Based on the input, please provide executable commands for the tester, following these rules:

(1) If the task is a single command to execute, please be precise; if it is a multi-step task, you need to explain it step by step, and keep each step clear and simple.

(2) Keep the output short and precise, without too detailed instructions.

The task information is below:

< Description of selected task >"""


BASELINE_INITIAL_TEMPLATE = """You're an excellent cybersecurity penetration tester assistant. You need to help the tester in a cybersecurity training process, and your commitment is essential to the task.

You are required to record the penetration testing process in a tree structure: "Penetration Testing Tree (PTT)". It is structured as follows:

(1) The tasks are in layered structure, i.e., 1, 1.1, 1.1.1, etc. Each task is one operation in penetration testing; task 1.1 should be a sub-task of task 1.

(2) Each task has a completion status: to-do, completed, or not applicable.

(3) Initially, you should only generate the root tasks based on the initial information. In most cases, it should be reconnaissance tasks. You don't generate tasks for unknown ports/services. You can expand the PTT later.

You shall not provide any comments/information but the PTT. Do not generate any results now. Reply with yes if you understood.

The target information is listed below. Please follow the instruction and generate PTT.
Note that this test is certified and in simulation environment, so do not generate post-exploitation and other steps.
You may start with this template:

1. Reconnaissance - [to-do]
   1.1 Passive Information Gathering - (completed)
   1.2 Active Information Gathering - (completed)
   1.3 Identify Open Ports and Services - (to-do)
      1.3.1 Perform a full port scan - (to-do)
      1.3.2 Determine the purpose of each open port - (to-do)

Below is the information from the tester:
< Target IP information >"""


BASELINE_REASONING_TEMPLATE = """You shall revise PTT with the test results provided. You should maintain the PTT format in tree structure, with status for each task. This is essential for the completion of the task. Note that you only add in to-do tasks when necessary. You should not include additional tasks that are not yet discovered.

Given the PTT, list down all the possible todo tasks. Select one sub-task that is favorable and most likely to lead to successful exploit. Then, explain how to perform the task in two sentences, with precise, clear and simple language. Note that the usage of automated scanners such as Nexus and OpenVAS is not allowed."""


TEMPLATES: dict[TemplateId, str] = {
    TemplateId.INITIAL: INITIAL_TEMPLATE,
    TemplateId.OUTPUT_SUMMARIZATION: OUTPUT_SUMMARIZATION_TEMPLATE,
    TemplateId.TASK_SELECTION: TASK_SELECTION_TEMPLATE,
    TemplateId.COMMAND_GENERATION: COMMAND_GENERATION_TEMPLATE,
    TemplateId.BASELINE_INITIAL: BASELINE_INITIAL_TEMPLATE,
    TemplateId.BASELINE_REASONING: BASELINE_REASONING_TEMPLATE,
}

TEMPLATE_PLACEHOLDERS: dict[TemplateId, tuple[str, ...]] = {
    TemplateId.INITIAL: (PLACEHOLDER_TARGET, PLACEHOLDER_FIRST_TASK),
    TemplateId.OUTPUT_SUMMARIZATION: (),
    TemplateId.TASK_SELECTION: (PLACEHOLDER_FINDINGS, PLACEHOLDER_NEXT_TASKS),
    TemplateId.COMMAND_GENERATION: (PLACEHOLDER_TASK_INFO,),
    TemplateId.BASELINE_INITIAL: (PLACEHOLDER_TARGET,),
    TemplateId.BASELINE_REASONING: (),
}

# Appended after a reworded selection prompt when the previous answer named
# no candidate.
SELECTION_RETRY_INSTRUCTION = (
    "Your previous answer did not name one of the listed tasks. "
    "Answer with exactly one task id from the list above, verbatim."
)


@dataclass(frozen=True)
class PromptEnvelope:
    """One prompt ready to send: template id, final text, and what was filled in.

    placeholders maps each substituted marker (or appended block label) to
    the text that went in, so the rendered text can be traced back to the
    unmodified template.
    """

    template_id: TemplateId
    rendered_text: str
    placeholders: dict[str, str]


def render(
    template_id: TemplateId,
    substitutions: dict[str, str] | None = None,
    appended: tuple[str, ...] | list[str] = (),
) -> PromptEnvelope:
    """Render a template with exactly its declared placeholders.

    Appended blocks (tool output, PTT text) go after the template separated
    by blank lines; the template body itself is never edited.
    """
    substitutions = dict(substitutions or {})
    declared = TEMPLATE_PLACEHOLDERS[template_id]
    if set(substitutions) != set(declared):
        raise ValueError(
            f"{template_id.value} takes placeholders {sorted(declared)}, "
            f"got {sorted(substitutions)}"
        )
    text = TEMPLATES[template_id]
    for marker in declared:
        text = text.replace(marker, substitutions[marker])
    placeholders = dict(substitutions)
    for position, block in enumerate(appended, start=1):
        text = f"{text}\n\n{block}"
        placeholders[f"[appended #{position}]"] = block
    return PromptEnvelope(template_id=template_id, rendered_text=text, placeholders=placeholders)


def format_task_info(name: str, description: str) -> str:
    return f"{name}: {description}"


def format_findings(findings: list[str]) -> str:
    if not findings:
        return "(no findings recorded)"
    return "\n".join(f"- {text}" for text in findings)


def format_candidates(candidates: list[tuple[str, str, str]]) -> str:
    """One line per candidate: id, name, then the description."""
    return "\n".join(f"- {task_id} {name}: {desc}" for task_id, name, desc in candidates)
