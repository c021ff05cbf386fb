#!/usr/bin/env python3
"""Arbitrary-precision reference values for the cutting-edge model.

Evaluates the friction angle, minimum chip thickness, contact stress and
elastic recovery chain with mpmath at 60 significant digits, for the Al6061
soft/brittle phases and a few auxiliary points. The printed values are frozen
into the Rust test suites; this script is the independent route and must stay
free of any code shared with the library.

Run:  python3 tools/oracle.py
"""

from mpmath import mp, mpf, sqrt, cos, acos, atan, pi, sin

mp.dps = 60


def friction_angle(mu):
    return acos(1 / sqrt(1 + mu * mu))


def min_chip_thickness(mu, r):
    beta = friction_angle(mu)
    return r * (1 - cos(pi / 4 - beta / 2))


def contact_chord(r, h_m):
    # sqrt(r^2 - (r - h_m)^2), the flank contact half-width
    return sqrt(r * r - (r - h_m) * (r - h_m))


def contact_stress(e_pa, h_m, r):
    return e_pa * h_m / contact_chord(r, h_m)


def elastic_recovery(e_pa, sigma_p_pa, mu, r):
    h_m = min_chip_thickness(mu, r)
    sigma = contact_stress(e_pa, h_m, r)
    if sigma < sigma_p_pa:
        return h_m
    return h_m - sigma_p_pa * contact_chord(r, h_m) / e_pa


def show(label, value, digits=20):
    print(f"{label:42s} {mp.nstr(value, digits)}")


R_UM = mpf("1.36")

print("== friction angle ==")
show("beta(mu=0)            [rad]", friction_angle(mpf(0)))
show("beta(mu=1)            [rad]", friction_angle(mpf(1)))
show("beta(mu=0.3)          [rad]", friction_angle(mpf("0.3")))
show("beta(mu=0.5)          [rad]", friction_angle(mpf("0.5")))
show("pi/4                  [rad]", pi / 4)

print("== minimum chip thickness ==")
show("h_m(mu=0,   r=1)      [um]", min_chip_thickness(mpf(0), mpf(1)))
show("h_m(mu=0.3, r=1.36)   [um]", min_chip_thickness(mpf("0.3"), R_UM))
show("h_m(mu=0.5, r=1.36)   [um]", min_chip_thickness(mpf("0.5"), R_UM))

print("== contact stress (E in Pa, lengths in um) ==")
hm_soft = min_chip_thickness(mpf("0.3"), R_UM)
hm_brittle = min_chip_thickness(mpf("0.5"), R_UM)
show("chord(r=1.36, hm_soft)    [um]", contact_chord(R_UM, hm_soft))
show("chord(r=1.36, hm_brittle) [um]", contact_chord(R_UM, hm_brittle))
show("sigma(E=70GPa,  hm_soft)    [Pa]", contact_stress(mpf("70e9"), hm_soft, R_UM))
show("sigma(E=8.7GPa, hm_brittle) [Pa]", contact_stress(mpf("8.7e9"), hm_brittle, R_UM))

print("== elastic recovery ==")
hr_soft = elastic_recovery(mpf("70e9"), mpf("240e6"), mpf("0.3"), R_UM)
hr_brittle = elastic_recovery(mpf("8.7e9"), mpf("0.04e6"), mpf("0.5"), R_UM)
show("h_r(soft:  E=70GPa,  sp=240MPa,  mu=0.3) [um]", hr_soft)
show("h_r(brittle: E=8.7GPa, sp=0.04MPa, mu=0.5) [um]", hr_brittle)
show("h_r contrast soft-brittle  [um]", hr_soft - hr_brittle)

print("== paper table comparison ==")
show("h_m soft   - 0.2689", hm_soft - mpf("0.2689"))
show("h_m brittle- 0.2031", hm_brittle - mpf("0.2031"))
show("h_r soft   - 0.2655", hr_soft - mpf("0.2655"))
show("h_r brittle- 0.2021", hr_brittle - mpf("0.2021"))

print("== profile analysis references ==")
# Ra and Rq of a pure sine of amplitude A: 2A/pi and A/sqrt(2).
show("Ra(sine, A=1)", 2 / pi)
show("Rq(sine, A=1)", 1 / sqrt(2))
# Moving-average gain for a sine of wavelength L averaged over window W:
# sin(pi W / L) / (pi W / L); frozen for the two-sine decomposition test.
for ratio in ("8", "0.125"):
    w_over_l = mpf(ratio)
    x = pi * w_over_l
    show(f"MA gain (W/L={ratio})", sin(x) / x)
