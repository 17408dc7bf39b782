"""Generate the bundled scripted run for the gantry-crane problem.

Writes ``fixtures/full_run.script`` and ``fixtures/search_fixtures.json``.
The script follows the conversation shape of the reference case study: who
the supervisor calls in which step and which tools they use. Texts are
illustrative, token counts are plausible figures for a GPT-4o class model.

    python3 scripts/make_full_run.py
"""

from __future__ import annotations

import json
from pathlib import Path

from triz_agents.conversation import TokenUsage, ToolCall
from triz_agents.llm import ChatResponse, FinishReason, Script, ScriptEntry

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

PM = "ProjectManager"
DS = "DocumentationSpecialist"
ME = "MechanicalEngineer"
CSE = "ControlSystemsEngineer"
SE = "SafetyEngineer"
TRIZ = "TRIZSpecialist"
OPS = "OperationsSpecialist"


def _ex(url: str, content: str) -> dict[str, str]:
    return {"url": url, "content": content}


SEARCH = {
    "gantry crane main components and supersystem": [
        _ex("https://example.org/cranes/gantry-overview",
            "A gantry crane has two or more legs running on rails, a main girder spanning them, a trolley travelling "
            "along the girder and a hoist with rope and hook. Drives, brakes and an operator cab or remote control "
            "complete the machine."),
        _ex("https://example.org/cranes/yard-operations",
            "In ports and steel plants gantry cranes share the site with workers, trucks and stacked goods. Wind, dust "
            "and temperature changes act on the crane during operation."),
    ],
    "gantry crane function analysis trolley hoist girder": [
        _ex("https://example.org/cranes/functions",
            "The girder supports the trolley, the trolley moves the hoist horizontally, the hoist lifts the load through "
            "the rope, and the rails guide the legs. Brakes stop and hold each motion."),
    ],
    "gantry crane control system functions anti-sway": [
        _ex("https://example.org/control/anti-sway-basics",
            "A suspended load behaves like a pendulum. Acceleration of the trolley excites swing whose period depends on "
            "rope length. Variable frequency drives and sway sensors allow the controller to limit oscillation."),
    ],
    "gantry crane safety hazards load swing overheating": [
        _ex("https://example.org/safety/crane-hazards",
            "Typical crane hazards are dropped loads, collisions caused by swinging loads, structural overload and "
            "motor or brake overheating after long duty cycles."),
    ],
    "control systems for gantry cranes excessive swinging overheating": [
        _ex("https://example.org/control/sway-and-heat",
            "Aggressive acceleration profiles increase both load swing and motor current. Repeated heavy lifts at full "
            "speed drive the hoist motor above its rated duty, which causes thermal trips and emergency stops."),
        _ex("https://example.org/control/thermal-protection",
            "Thermal models of the motor can estimate winding temperature from current and duty so that the drive "
            "reduces speed before the protection trips."),
    ],
    "causes of hoist motor overheating overload cranes": [
        _ex("https://example.org/safety/overload",
            "Lifting above rated capacity raises motor current and brake wear. Without a load limiter the operator has "
            "no feedback until a protective device stops the crane abruptly."),
    ],
    "input shaping anti-sway control gantry crane": [
        _ex("https://example.org/control/input-shaping",
            "Input shaping splits a motion command into timed pulses so that the oscillations they excite cancel out. "
            "It needs the rope length, which the hoist encoder provides."),
    ],
    "crane overload protection load limiter safety": [
        _ex("https://example.org/safety/load-limiter",
            "A load cell in the hoist or rope anchor measures the lifted weight. The controller blocks lifting above "
            "capacity and can scale permitted speed to the measured load."),
    ],
    "crane operator training and maintenance practice for anti-sway systems": [
        _ex("https://example.org/ops/anti-sway-practice",
            "Operators adapt quickly to automatic sway control when the crane still responds directly to the joystick. "
            "Sensors need periodic calibration and the maintenance plan should include drive temperature logs."),
    ],
}

_call_seq = 0


def _call(name: str, **arguments: object) -> ToolCall:
    global _call_seq
    _call_seq += 1
    return ToolCall(f"call_{_call_seq:03d}", name, json.dumps(arguments))


class Builder:
    def __init__(self) -> None:
        self.entries: list[ScriptEntry] = []
        self.turns: dict[tuple[str, object], int] = {}
        self.context = 1600  # grows as the run accumulates documentation

    def _usage(self, agent: str, completion: int) -> TokenUsage:
        prompt = self.context + (600 if agent != PM else 0)
        self.context += completion // 3
        return TokenUsage(prompt, completion)

    def add(self, agent: str, step: object, response: ChatResponse) -> None:
        turn = self.turns.get((agent, step), 0)
        self.turns[(agent, step)] = turn + 1
        self.entries.append(ScriptEntry(agent, step, turn, response))

    def say(self, agent: str, step: object, text: str, completion: int) -> None:
        self.add(agent, step, ChatResponse(text, usage=self._usage(agent, completion)))

    def tools(self, agent: str, step: object, *calls: ToolCall) -> None:
        usage = self._usage(agent, 40 * len(calls))
        self.add(agent, step, ChatResponse(None, calls, usage, FinishReason.TOOL_CALLS))

    def route(self, step: object, text: str, target: str) -> None:
        body = f"{text}\n{target}" if text else target
        self.say(PM, step, body, 90)

    def search_turn(self, agent: str, step: object, query: str, answer: str) -> None:
        self.tools(agent, step, _call("web_search", query=query))
        self.say(agent, step, answer, 520)


def build() -> Script:
    b = Builder()

    # step 1
    b.route(1, "MechanicalEngineer, please identify the elements of the gantry crane system and its supersystem.", ME)
    b.search_turn(ME, 1, "gantry crane main components and supersystem",
                  "Engineering system: gantry crane.\n\n"
                  "- Components: rails, legs, main girder, trolley, hoist (motor, drum, rope, hook), brakes, drives, "
                  "controller and operator station.\n"
                  "- Object: the suspended load.\n"
                  "- Supersystem: operators and ground workers, trucks and stored goods, wind, dust, temperature.\n"
                  "- Main function: move the load from one place to another quickly and safely.\n"
                  "- Observed problems: load swing at the target, overheating of drives and abrupt stops under "
                  "overload.")
    b.route(1, "Thank you. DocumentationSpecialist, please document this step.", DS)
    b.say(DS, 1, "## Engineering system\n\nThe system is a rail-mounted gantry crane. Its components are rails, legs, "
                 "main girder, trolley, hoist with motor, drum, rope and hook, brakes, drives and the controller. "
                 "The object of its main function is the load.\n\n## Supersystem\n\nOperators, ground workers, "
                 "vehicles, stored goods, wind, dust and ambient temperature.\n\n## Problems\n\n- Excessive load "
                 "swing when moving fast\n- Overheating under repeated heavy lifts\n- Sudden stops caused by overload "
                 "protection\n\nContributor: MechanicalEngineer.", 650)
    b.route(1, "", "FINISH")

    # step 2
    b.route(2, "MechanicalEngineer, please prepare the function analysis of the crane.", ME)
    b.search_turn(ME, 2, "gantry crane function analysis trolley hoist girder",
                  "Function model (mechanical view):\n\n- Girder supports trolley (useful)\n- Trolley moves hoist "
                  "(useful)\n- Hoist holds load via rope (useful)\n- Rope swings load (harmful)\n- Motor heats hoist "
                  "(harmful)\n- Brake stops trolley (useful, excessive under overload)")
    b.route(2, "ControlSystemsEngineer, add the functions of the control system.", CSE)
    b.search_turn(CSE, 2, "gantry crane control system functions anti-sway",
                  "Control functions:\n\n- Drive accelerates trolley (useful, excessive when aggressive)\n- "
                  "Controller limits speed (insufficient, no load feedback)\n- No function damps the swing; the "
                  "pendulum is uncontrolled (insufficient)")
    b.route(2, "SafetyEngineer, please evaluate safety functions and hazards.", SE)
    b.search_turn(SE, 2, "gantry crane safety hazards load swing overheating",
                  "Safety view:\n\n- Swinging load endangers workers and goods (harmful)\n- Thermal protection "
                  "stops the hoist abruptly (useful but harmful side effect)\n- Overload is detected too late "
                  "(insufficient)")
    b.route(2, "DocumentationSpecialist, please document the function analysis.", DS)
    b.say(DS, 2, "## Function analysis\n\n| Carrier | Function | Object | Rating |\n|---|---|---|---|\n"
                 "| Girder | supports | trolley | useful |\n| Trolley | moves | hoist | useful |\n"
                 "| Rope | holds | load | useful |\n| Rope | swings | load | harmful |\n"
                 "| Motor | heats | hoist | harmful |\n| Drive | accelerates | trolley | excessive |\n"
                 "| Controller | limits | speed | insufficient |\n\nThe swing of the load has no damping function. "
                 "Overload detection is insufficient. Contributors: MechanicalEngineer, ControlSystemsEngineer, "
                 "SafetyEngineer.", 720)
    b.route(2, "", "FINISH")

    # step 3
    b.route(3, "ControlSystemsEngineer, please start the cause and effect chain analysis.", CSE)
    b.search_turn(CSE, 3, "control systems for gantry cranes excessive swinging overheating",
                  "Chains:\n\n1. Excessive swing <- high trolley acceleration <- operator demands speed <- drive "
                  "profile not shaped <- controller has no sway model\n2. Overheating <- motor current above "
                  "rating <- heavy loads at full speed <- no load-dependent speed limit\n3. Sudden stop <- thermal "
                  "or overload trip <- overload not prevented beforehand")
    b.route(3, "SafetyEngineer, please add the safety-related causes.", SE)
    b.search_turn(SE, 3, "causes of hoist motor overheating overload cranes",
                  "The root causes that can be changed are the missing load measurement and the fixed acceleration "
                  "profile. Operator behaviour is a contributing cause but depends on them.")
    b.route(3, "DocumentationSpecialist, please document the CECA.", DS)
    b.say(DS, 3, "## Cause and effect chains\n\n- Swing: fast acceleration, unshaped drive profile, no sway "
                 "model in the controller.\n- Overheating: current above rating, heavy loads at full speed, no "
                 "load-dependent speed limit.\n- Sudden stop: protective trip after overload that was not prevented."
                 "\n\n## Key causes\n\n1. Fixed acceleration profile\n2. Missing load measurement\n\nContributors: "
                 "ControlSystemsEngineer, SafetyEngineer.", 680)
    b.route(3, "", "FINISH")

    # step 4
    b.route(4, "TRIZSpecialist, please formulate the engineering contradictions and consult the matrix.", TRIZ)
    b.tools(TRIZ, 4, _call("triz_features"))
    b.tools(TRIZ, 4, _call("contradiction_matrix", improving=9, worsening=13),
            _call("contradiction_matrix", improving=1, worsening=31))
    b.tools(TRIZ, 4, _call("inventive_principles", ids=[28, 33, 1, 18, 22, 35, 31, 39]))
    b.say(TRIZ, 4, "Engineering contradictions:\n\n- EC1: improving Speed (9) worsens Stability of the object's "
                   "composition (13), the load swings. Principles 28, 33, 1, 18.\n- EC2: improving Weight of "
                   "moving object (1) worsens Object-generated harmful factors (31), overheating and trips. "
                   "Principles 22, 35, 31, 39.\n\nMost promising: 28 Mechanics substitution (sensor based "
                   "control), 1 Segmentation (split the motion into shaped phases), 35 Parameter changes "
                   "(load-dependent speed).", 610)
    b.route(4, "DocumentationSpecialist, please document the contradictions.", DS)
    b.say(DS, 4, "## Engineering contradictions\n\n| EC | Improving | Worsening | Principles |\n|---|---|---|---|\n"
                 "| 1 | Speed (9) | Stability of the object's composition (13) | 28, 33, 1, 18 |\n"
                 "| 2 | Weight of moving object (1) | Object-generated harmful factors (31) | 22, 35, 31, 39 |\n\n"
                 "Selected principles: 28, 1, 35. Contributor: TRIZSpecialist.", 600)
    b.route(4, "", "FINISH")

    # step 5
    b.route(5, "TRIZSpecialist, please derive the physical contradiction.", TRIZ)
    b.say(TRIZ, 5, "Physical contradiction: trolley acceleration must be high to keep cycle time short and low to "
                   "avoid exciting swing. Separation in time: accelerate in shaped pulses so that high average "
                   "speed coexists with low residual swing. Separation on condition: allowed speed depends on the "
                   "measured load.", 430)
    b.route(5, "DocumentationSpecialist, please document it.", DS)
    b.say(DS, 5, "## Physical contradiction\n\nAcceleration must be high (throughput) and low (no swing).\n\n"
                 "## Separation\n\n- In time: shaped acceleration phases.\n- On condition: speed limit as a "
                 "function of measured load.\n\nContributor: TRIZSpecialist.", 420)
    b.route(5, "", "FINISH")

    # step 6
    b.route(6, "ControlSystemsEngineer, please propose solutions based on the principles.", CSE)
    b.search_turn(CSE, 6, "input shaping anti-sway control gantry crane",
                  "Solutions:\n\n1. Input shaping of trolley commands using rope length from the hoist encoder "
                  "(principles 1, 28).\n2. Closed-loop sway damping with a camera or inclinometer on the hook "
                  "(principle 28).\n3. Motor thermal model that lowers speed before a trip (principle 35).")
    b.route(6, "SafetyEngineer, please review these proposals.", SE)
    b.search_turn(SE, 6, "crane overload protection load limiter safety",
                  "Add a load cell and make the speed limit depend on the load (principle 35). Keep the mechanical "
                  "brake independent of the software.")
    b.route(6, "OperationsSpecialist, please assess the operational impact.", OPS)
    b.search_turn(OPS, 6, "crane operator training and maintenance practice for anti-sway systems",
                  "Input shaping keeps direct joystick response, so acceptance is good. Plan sensor calibration and "
                  "log drive temperatures in maintenance.")
    b.route(6, "DocumentationSpecialist, please document the solutions.", DS)
    b.say(DS, 6, "## Solutions\n\n1. Input shaping of trolley motion (principles 1, 28)\n2. Closed-loop sway "
                 "damping with hook sensor (28)\n3. Load cell and load-dependent speed limit (35)\n4. Thermal "
                 "model with early derating (35)\n\nReviewed by SafetyEngineer and OperationsSpecialist.", 640)
    b.route(6, "", "FINISH")

    # final report
    b.say(DS, "final", "# Final report\n\nGantry cranes that move heavy loads fast suffer from load swing, "
                       "overheating and sudden stops.\n\n1. The crane and its supersystem were defined.\n2. The "
                       "function model shows an undamped swing and insufficient overload detection.\n3. Key causes "
                       "are the fixed acceleration profile and the missing load measurement.\n4. Contradictions "
                       "9/13 and 1/31 point to principles 28, 1, 35 among others.\n5. Acceleration must be high "
                       "and low; separation in time and on condition.\n6. Proposed: input shaping, sway feedback, "
                       "load-dependent speed limit and thermal derating.", 1300)
    return Script(b.entries)


def main() -> None:
    script = build()
    total = script.total_usage().total_tokens
    assert 150_000 <= total <= 250_000, total
    script.save(FIXTURES / "full_run.script")
    (FIXTURES / "search_fixtures.json").write_text(json.dumps(SEARCH, indent=2) + "\n", encoding="utf-8")
    print(f"{len(script)} entries, {total} tokens")


if __name__ == "__main__":
    main()
