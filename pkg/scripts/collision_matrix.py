"""Print which demo bodies can collide with which, from their layers and masks."""

from importlib import resources

from immerse import load_world, parse_scene
from immerse.physics import interacts


def main():
    scene = parse_scene((resources.files("immerse") / "data" / "demo.scene").read_bytes())
    bodies = load_world(scene).physics.bodies
    # one representative per filter
    seen = {}
    for b in bodies:
        seen.setdefault((b.filter.layer, b.filter.mask), b)
    reps = list(seen.values())
    width = max(len(b.node.name) for b in reps)
    print(" " * width, *(f"{b.node.name[:8]:>8}" for b in reps))
    for a in reps:
        print(f"{a.node.name:<{width}}", *(f"{'x' if interacts(a, b) else '.':>8}" for b in reps))
    print()
    for b in reps:
        print(f"{b.node.name}: layers {b.filter.layers()} mask {b.filter.mask_layers()}")


if __name__ == "__main__":
    main()
