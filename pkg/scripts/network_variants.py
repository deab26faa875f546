"""Center-node outcomes of the network scenarios under alternative readings.

Varies how non-robust players are modeled (exact limit or a large finite
penalty) and what the non-adversarial leaves play in the adversarial
scenarios (their scenario equilibrium gains or Nash gains).
"""

from srlq.experiments import NASH_PROXY_PENALTY, network_scenarios
from srlq.game_model import build_star_network_game


def main():
    spec = build_star_network_game(5, 20, 5.0)
    for proxy in (None, NASH_PROXY_PENALTY):
        for bystanders in ("equilibrium", "nash"):
            res = network_scenarios(spec, nonrobust_penalty=proxy, bystanders=bystanders)
            label = f"non-robust={'exact' if proxy is None else f'M={proxy:g}'}, bystanders={bystanders}"
            print(label)
            for name, terminal, cost in res.rows:
                print(f"  {name:<10} terminal {terminal:8.4f}   center cost {cost:9.4f}")


if __name__ == "__main__":
    main()
