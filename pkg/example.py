#!/usr/bin/env python3
"""Example usage of the gaseq market model."""

from gaseq import (
    MarketOutcome,
    YearUpdate,
    build_plan,
    fixtures,
    market_shares_and_hhi,
    price_decomposition,
    run_plan,
    solve_model,
    welfare_summary,
)
from gaseq.scenarios import Expansion, ExpansionKind, plan_reports


def main():
    """Solve the reference markets and run one scenario year."""
    print("=" * 60)
    print("gaseq - Spatial Gas Market Equilibrium Demo")
    print("=" * 60)
    print()

    # Monopoly against perfect competition
    monopoly = fixtures.monopoly()
    competitive = fixtures.competitive()
    mono = solve_model(monopoly).require_solved()
    comp = solve_model(competitive).require_solved()
    print("One market, one trader, marginal cost 100 k€/mcm:")
    print(f"  Cournot price:     {mono.price[('N1', 'year')]:8.2f} k€/mcm")
    print(f"  Cournot volume:    {mono.consumption[('N1', 'year')]:8.2f} mcm/d")
    print(f"  Competitive price: {comp.price[('N1', 'year')]:8.2f} k€/mcm")
    print(f"  Competitive volume:{comp.consumption[('N1', 'year')]:8.2f} mcm/d")
    print()

    parts = price_decomposition(monopoly, mono, "N1", "year")
    print("Cournot price decomposition:")
    print(f"  production cost  {parts.producer_cost:8.2f}")
    print(f"  trader markup    {parts.trader_profit:8.2f}")
    print(f"  total            {parts.total:8.2f}")
    print()

    delta = welfare_summary(MarketOutcome(competitive, comp), MarketOutcome(monopoly, mono))
    print("Moving from Cournot to price taking (M€/y):")
    print(f"  consumer surplus {delta.cs['AA']:+10.2f}")
    print(f"  producer surplus {delta.ps['AA']:+10.2f}")
    print(f"  EU welfare       {delta.sw_eu:+10.2f}")
    print()

    # Two seasons, storage and LNG
    model = fixtures.two_node()
    solution = solve_model(model).require_solved()
    print("Two-node market:")
    for (node, period), price in sorted(solution.price.items()):
        volume = solution.consumption[(node, period)]
        print(f"  {node} {period:6s} price {price:7.2f}  consumption {volume:7.2f}")
    hhi = market_shares_and_hhi(model, solution, eu_aggregate=True)
    print(f"  EU HHI {hhi.hhi:.0f} ({hhi.classification})")
    print()

    # One scenario year with a regas expansion
    update = YearUpdate(2014, expansions=(Expansion(ExpansionKind.REGAS, "n", capacity=10.0),))
    plan = build_plan(model, update)
    reports = plan_reports(plan, run_plan(plan))
    print(f"Scenario year {update.year}: {len(plan.runs)} runs")
    for report in reports:
        dcs = report.summary.cs_eu if report.summary else float("nan")
        ref = "-" if report.reference_id is None else report.reference_id
        print(f"  run {report.simulation_id} {report.simulation_type:8s} ref {ref}  dCS {dcs:+10.3f}")
    print()

    print("=" * 60)
    print("Demo Complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
