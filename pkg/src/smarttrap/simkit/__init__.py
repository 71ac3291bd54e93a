"""Simulated hardware and field: scene oracle, device ports, field rounds."""

from .field import (
    FieldScenario,
    ScenarioError,
    demo_scenario,
    dump_scenario,
    hil_round,
    load_scenario,
    parse_scenario,
    round_captures,
    save_scenario,
    scatter_insects,
    serpentine_path,
    simulate_round,
)
from .ports import FixedGps, FlakyTransport, IdleCamera, RecordingActuators, ScriptedCamera, ScriptedGps, scripted_camera
from .scene import (
    Blob,
    Noise,
    Scene,
    SceneError,
    SceneSpec,
    capture_scene_spec,
    generate_scene,
    ground_truth,
    random_scene_spec,
    reference_scene_spec,
)
