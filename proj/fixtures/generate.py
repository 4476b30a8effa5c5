"""Regenerates the simulator fixtures in this directory.

    python3 fixtures/generate.py
"""

import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent

APPS = [
    ("mail", "Mail", ["Inbox", "Compose", "Folders", "Filters"]),
    ("notes", "Notes", ["Notebook", "Tags", "Trash", "Export"]),
    ("photos", "Photos", ["Albums", "Editor", "Slideshow", "Sharing"]),
    ("music", "Music", ["Library", "Playlists", "Equalizer", "Radio"]),
    ("calendar", "Calendar", ["Month", "Agenda", "Reminders", "Sync"]),
    ("files", "Files", ["Recent", "Downloads", "Storage", "Archive"]),
    ("terminal", "Terminal", ["Profiles", "History", "Keys", "Themes"]),
    ("maps", "Maps", ["Search", "Routes", "Layers", "Offline"]),
    ("browser", "Browser", ["Bookmarks", "History", "Privacy", "Extensions"]),
    ("settings", "Settings", ["Display", "Network", "Accounts", "Power"]),
]

OPTIONS = ["notifications", "compact view", "auto save"]


def row(sizes, y, x0=4, gap=4):
    boxes = []
    x = x0
    for s in sizes:
        boxes.append([x, y, x + s, y + s])
        x += s + gap
    return boxes


def launcher():
    width, height = 160, 120
    screens = []
    icon_sizes = [30, 28, 26, 24, 22, 20, 18, 16, 14, 12]
    boxes = row(icon_sizes[:5], 4) + row(icon_sizes[5:], 40)
    home = {"id": "home", "widgets": [], "shortcuts": [
        {"keys": "ctrl+alt+t", "goal": "Open a terminal with the keyboard shortcut", "goto": "terminal"},
    ]}
    for (app_id, name, _), box in zip(APPS, boxes):
        home["widgets"].append({
            "id": f"icon_{app_id}", "kind": "icon", "box": box, "label": name,
            "goal": f"Open the {name} application", "goto": app_id,
        })
    home["widgets"].append({
        "id": "home_search", "kind": "text_field", "box": [4, 72, 100, 84], "label": "Launcher search",
        "samples": ["budget report", "holiday photos", "wifi settings"],
        "set": {"home.searched": "yes"},
    })
    screens.append(home)

    for app_id, name, features in APPS:
        sizes = [(34, 16), (30, 14), (26, 12), (22, 10)]
        widgets = []
        y = 4
        for (w, h), feature in zip(sizes, features):
            fid = f"{app_id}_{feature.lower()}"
            widgets.append({
                "id": f"{fid}_open", "box": [4, y, 4 + w, y + h], "label": feature,
                "goal": f"Open {feature} in {name}", "goto": fid,
            })
            y += h + 4
        widgets.append({
            "id": f"{app_id}_list", "kind": "scroll_area", "box": [60, 4, 150, 60], "label": f"{name} list",
            "pages": 3,
        })
        widgets.append({
            "id": f"{app_id}_query", "kind": "text_field", "box": [60, 66, 150, 78], "label": f"{name} search",
            "samples": ["quarterly", "family", "draft"],
        })
        screens.append({"id": app_id, "widgets": widgets, "shortcuts": [
            {"keys": "ctrl+f", "goal": f"Search inside {name}", "set": {f"{app_id}_query": "*"}},
        ]})

        for feature in features:
            fid = f"{app_id}_{feature.lower()}"
            fw = []
            y = 4
            for k, opt in enumerate(OPTIONS):
                fw.append({
                    "id": f"{fid}_opt{k}", "box": [4, y, 60 - 6 * k, y + 12], "label": f"{opt} toggle",
                    "goal": f"Enable {opt} for {feature} in {name}", "set": {f"{fid}.opt{k}": "on"},
                })
                y += 16
            fw.append({
                "id": f"{fid}_apply", "box": [70, 4, 120, 20], "label": "Apply",
                "goal": f"Apply the {feature} changes in {name}", "goto": f"{fid}_done",
            })
            fw.append({
                "id": f"{fid}_help", "box": [70, 30, 100, 42], "label": "Help",
                "goal": f"Show help for {feature}", "expected_goto": f"{fid}_done",
                "set": {f"{fid}.help": "shown"},
            })
            screens.append({"id": fid, "widgets": fw})
            screens.append({"id": f"{fid}_done", "completion": True, "widgets": [
                {"id": f"{fid}_back", "box": [4, 4, 40, 16], "label": "Back",
                 "goal": f"Return to {name}", "goto": app_id},
            ]})

    return {
        "schema_version": 1,
        "name": "launcher",
        "render": {"width": width, "height": height, "channels": 1},
        "initial_screen": "home",
        "categories": [
            {"id": "productivity", "knowledge": "Mail, notes, calendar and files share a launcher; "
                                                "each application has feature pages with toggles and an Apply step."},
            {"id": "media", "knowledge": "Photos and music applications expose libraries, editors and players.",
             "vars": {"theme": "dark"}},
            {"id": "system", "knowledge": "Settings, terminal and browser privacy options.",
             "initial_screen": "settings"},
        ],
        "assets": {
            "docs/report.txt": {"doc": "report"},
            "img/beach.png": {"photo": "beach"},
            "accounts/work.json": {"account": "work"},
        },
        "screens": screens,
    }


def ring(n=7):
    screens = []
    for i in range(n):
        screens.append({"id": f"room{i}", "widgets": [
            {"id": f"room{i}_next", "box": [4, 4, 28, 20], "label": f"Door {i} east",
             "goal": f"Walk east from room {i}", "goto": f"room{(i + 1) % n}"},
            {"id": f"room{i}_skip", "box": [34, 4, 58, 20], "label": f"Door {i} north",
             "goal": f"Walk north from room {i}", "goto": f"room{(i + 3) % n}"},
        ]})
    return {
        "schema_version": 1,
        "name": "ring",
        "render": {"width": 64, "height": 32, "channels": 1},
        "initial_screen": "room0",
        "categories": [{"id": "walk", "knowledge": "Rooms connected by doors."}],
        "screens": screens,
    }


def main():
    for name, spec in [("launcher.json", launcher()), ("ring.json", ring())]:
        (HERE / name).write_text(json.dumps(spec, indent=2) + "\n")


if __name__ == "__main__":
    main()
