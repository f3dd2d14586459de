#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pixellens/rng.hpp"
#include "pixellens/trigger1.hpp"
#include "pixellens/trigger2.hpp"

using namespace pixellens;
using lightcurves::LightCurve;
using trigger2::PsplParams;

namespace {

LightCurve model_curve(const PsplParams& p, int n_epochs, double sigma, Rng* rng = nullptr) {
    LightCurve c;
    for (int e = 0; e < n_epochs; ++e) {
        const double t = static_cast<double>(e);
        double f = trigger2::pspl_flux(t, p);
        if (rng) f += rng->gaussian(0.0, sigma);
        c.samples.push_back({t, f, sigma, true});
    }
    return c;
}

trigger1::PeakCandidate seed_for(const PsplParams& p) {
    trigger1::PeakCandidate s;
    s.t_start = p.t0 - 2.0 * p.tE;
    s.t_peak = p.t0 + 0.3;  // deliberately off-center
    s.t_end = p.t0 + 2.0 * p.tE;
    return s;
}

}  // namespace

TEST_CASE("pspl amplification hits its anchor values") {
    CHECK_THAT(trigger2::pspl_amplification(1e6), Catch::Matchers::WithinAbs(1.0, 1e-11));
    CHECK_THAT(trigger2::pspl_amplification(1.0),
               Catch::Matchers::WithinAbs(1.3416408, 1e-7));  // 3/sqrt(5)
    CHECK_THAT(trigger2::pspl_amplification(0.5),
               Catch::Matchers::WithinAbs(2.1828206, 1e-7));  // 2.25/(0.5 sqrt(4.25))
    CHECK_THROWS(trigger2::pspl_amplification(0.0));
    CHECK_THROWS(trigger2::pspl_amplification(-1.0));
}

TEST_CASE("amplification is strictly decreasing over a 10^4-point grid") {
    double prev = trigger2::pspl_amplification(1e-3);
    for (int k = 1; k < 10000; ++k) {
        const double u = 1e-3 + 20.0 * k / 10000.0;
        const double a = trigger2::pspl_amplification(u);
        REQUIRE(a < prev);
        REQUIRE(a > 1.0);
        prev = a;
    }
}

TEST_CASE("pspl flux: peak value, asymptote and exact symmetry") {
    PsplParams p{500.0, 300.0, 16.0, 4.0, 1.0};
    CHECK_THAT(trigger2::pspl_flux(16.0, p),
               Catch::Matchers::WithinAbs(500.0 + 300.0 * (3.0 / std::sqrt(5.0) - 1.0), 1e-9));
    CHECK_THAT(trigger2::pspl_flux(16.0 + 4000.0, p), Catch::Matchers::WithinAbs(500.0, 1e-4));
    // Dyadic offsets make the symmetry bitwise.
    for (double d : {0.25, 0.5, 1.0, 2.0, 5.0, 7.75})
        REQUIRE(trigger2::pspl_flux(16.0 + d, p) == trigger2::pspl_flux(16.0 - d, p));
}

TEST_CASE("analytic jacobian matches central finite differences to 1e-6") {
    Rng rng(55);
    for (int iter = 0; iter < 100; ++iter) {
        PsplParams p;
        p.f_base = rng.uniform(100, 1000);
        p.f_s = rng.uniform(50, 500);
        p.t0 = rng.uniform(5, 25);
        p.tE = rng.uniform(0.5, 8.0);
        p.u0 = rng.uniform(0.05, 1.5);
        const double t = rng.uniform(0, 30);

        const auto J = trigger2::pspl_jacobian(t, p);
        auto perturbed = [&](int idx, double h) {
            PsplParams q = p;
            double* fields[5] = {&q.f_base, &q.f_s, &q.t0, &q.tE, &q.u0};
            *fields[idx] += h;
            return trigger2::pspl_flux(t, q);
        };
        for (int idx = 0; idx < 5; ++idx) {
            double* fields[5] = {&p.f_base, &p.f_s, &p.t0, &p.tE, &p.u0};
            const double h = 1e-6 * std::max(1.0, std::fabs(*fields[idx]));
            const double fd = (perturbed(idx, h) - perturbed(idx, -h)) / (2.0 * h);
            const double scale = std::max({1.0, std::fabs(J[idx]), std::fabs(fd)});
            REQUIRE_THAT(J[idx], Catch::Matchers::WithinAbs(fd, 1e-6 * scale));
        }
    }
}

TEST_CASE("constant fit: exact example and Monte Carlo sanity") {
    LightCurve two;
    two.samples = {{0.0, 9.0, 1.0, true}, {1.0, 11.0, 1.0, true}};
    auto fit = trigger2::fit_constant(two);
    CHECK(fit.f_mean == 10.0);
    CHECK_THAT(fit.chi2, Catch::Matchers::WithinAbs(2.0, 1e-12));

    LightCurve flat;
    for (int i = 0; i < 10; ++i) flat.samples.push_back({static_cast<double>(i), 42.0, 2.0, true});
    fit = trigger2::fit_constant(flat);
    CHECK(fit.chi2 == 0.0);

    Rng rng(77);
    LightCurve noisy;
    for (int i = 0; i < 100; ++i)
        noisy.samples.push_back({static_cast<double>(i), 500.0 + rng.gaussian(0.0, 3.0), 3.0, true});
    fit = trigger2::fit_constant(noisy);
    const double red = fit.chi2 / fit.dof;
    CHECK(red > 0.6);
    CHECK(red < 1.5);
}

TEST_CASE("noiseless pspl parameters are recovered to specification") {
    PsplParams truth{500.0, 300.0, 15.0, 4.0, 0.3};
    const auto curve = model_curve(truth, 30, 1.0);
    const auto fit = trigger2::fit_pspl(curve, seed_for(truth));
    CHECK(fit.converged);
    CHECK(fit.identifiable);
    CHECK_THAT(fit.params.t0, Catch::Matchers::WithinAbs(15.0, 0.05));
    CHECK_THAT(fit.params.tE, Catch::Matchers::WithinRel(4.0, 0.02));
    CHECK_THAT(fit.params.u0, Catch::Matchers::WithinRel(0.3, 0.05));
    CHECK(fit.chi2 < 1e-10);
}

TEST_CASE("a flat noiseless curve collapses to the constant solution") {
    LightCurve flat;
    for (int i = 0; i < 20; ++i) flat.samples.push_back({static_cast<double>(i), 250.0, 1.0, true});
    trigger1::PeakCandidate seed;
    seed.t_start = 8;
    seed.t_peak = 10;
    seed.t_end = 12;
    const auto constant = trigger2::fit_constant(flat);
    const auto fit = trigger2::fit_pspl(flat, seed);
    CHECK(!fit.identifiable);
    CHECK(fit.params.f_s == 0.0);
    CHECK(fit.chi2 == constant.chi2);
}

TEST_CASE("noisy pspl fit lands within tolerance at peak SNR 10") {
    PsplParams truth{500.0, 120.0, 15.0, 4.0, 0.3};
    // Peak excess = f_s (A(0.3) - 1) ~ 120 * 2.42 = 290; sigma 29 -> SNR 10.
    Rng rng(91);
    const auto curve = model_curve(truth, 30, 29.0, &rng);
    const auto fit = trigger2::fit_pspl(curve, seed_for(truth));
    CHECK_THAT(fit.params.t0, Catch::Matchers::WithinAbs(15.0, 0.5));
    const double red = fit.chi2 / fit.dof;
    CHECK(red > 0.5);
    CHECK(red < 2.0);
}

TEST_CASE("double fit recovers both peaks of a planetary-style event") {
    trigger2::DoubleParams truth;
    truth.f_base = 400.0;
    truth.f_s1 = 300.0;
    truth.t01 = 12.0;
    truth.tE1 = 2.5;
    truth.u01 = 0.3;
    truth.f_s2 = 60.0;  // flux ratio 0.2
    truth.t02 = 19.5;   // t0 + 3 tE
    truth.tE2 = 1.5;
    truth.u02 = 0.4;

    LightCurve curve;
    for (int e = 0; e < 30; ++e)
        curve.samples.push_back({static_cast<double>(e), trigger2::double_flux(e, truth), 1.0, true});

    trigger1::PeakCandidate c1, c2;
    c1.t_start = 9;
    c1.t_peak = 12;
    c1.t_end = 15;
    c1.significance = 500.0;
    c2.t_start = 18;
    c2.t_peak = 19;
    c2.t_end = 21;
    c2.significance = 80.0;

    const auto single = trigger2::fit_pspl(curve, c1);
    const auto dbl = trigger2::fit_double(curve, {c1, c2}, single);
    CHECK(dbl.chi2 <= single.chi2);
    const double t_first = std::min(dbl.params.t01, dbl.params.t02);
    const double t_second = std::max(dbl.params.t01, dbl.params.t02);
    CHECK_THAT(t_first, Catch::Matchers::WithinAbs(12.0, 0.5));
    CHECK_THAT(t_second, Catch::Matchers::WithinAbs(19.5, 0.5));
}

TEST_CASE("double fit of a single-peak curve collapses its second component") {
    PsplParams truth{500.0, 300.0, 15.0, 3.0, 0.3};
    const auto curve = model_curve(truth, 30, 1.0);
    const auto seed = seed_for(truth);
    const auto single = trigger2::fit_pspl(curve, seed);
    const auto dbl = trigger2::fit_double(curve, {seed}, single);
    CHECK(dbl.chi2 <= single.chi2 + 1e-9);
    const double secondary_peak_excess =
        dbl.params.f_s2 * (trigger2::pspl_amplification(std::max(dbl.params.u02, 1e-6)) - 1.0);
    CHECK(secondary_peak_excess < 0.01 * truth.f_s);
}

TEST_CASE("chi2 nesting holds on noisy curves") {
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        PsplParams truth{400.0, trial % 2 ? 250.0 : 0.0, 14.0 + trial * 0.3, 3.0, 0.4};
        const auto curve = model_curve(truth, 30, 8.0, &rng);
        trigger1::PeakCandidate seed;
        seed.t_start = truth.t0 - 4;
        seed.t_peak = truth.t0;
        seed.t_end = truth.t0 + 4;
        const auto constant = trigger2::fit_constant(curve);
        const auto single = trigger2::fit_pspl(curve, seed);
        const auto dbl = trigger2::fit_double(curve, {seed}, single);
        REQUIRE(single.chi2 <= constant.chi2 + 1e-9);
        REQUIRE(dbl.chi2 <= single.chi2 + 1e-9);
    }
}

TEST_CASE("affine equivariance: scaling fluxes and sigmas scales only the flux params") {
    PsplParams truth{500.0, 300.0, 15.0, 4.0, 0.3};
    Rng rng(9);
    auto curve = model_curve(truth, 30, 5.0, &rng);
    const auto fit1 = trigger2::fit_pspl(curve, seed_for(truth));

    const double c = 3.7;
    auto scaled = curve;
    for (auto& s : scaled.samples) {
        s.flux *= c;
        s.sigma *= c;
    }
    const auto fit2 = trigger2::fit_pspl(scaled, seed_for(truth));
    CHECK_THAT(fit2.params.f_base, Catch::Matchers::WithinRel(c * fit1.params.f_base, 1e-6));
    CHECK_THAT(fit2.params.f_s, Catch::Matchers::WithinRel(c * fit1.params.f_s, 1e-6));
    CHECK_THAT(fit2.params.t0, Catch::Matchers::WithinAbs(fit1.params.t0, 1e-6));
    CHECK_THAT(fit2.params.tE, Catch::Matchers::WithinRel(fit1.params.tE, 1e-6));
    CHECK_THAT(fit2.params.u0, Catch::Matchers::WithinRel(fit1.params.u0, 1e-6));
    CHECK_THAT(fit2.chi2, Catch::Matchers::WithinAbs(fit1.chi2, 1e-6 * std::max(1.0, fit1.chi2)));
}

TEST_CASE("classification accepts real events and rejects noise") {
    trigger2::SelectionThresholds th;
    Rng rng(321);

    // Flat noise -> rejected.
    {
        PsplParams truth{400.0, 0.0, 15.0, 3.0, 0.5};
        const auto curve = model_curve(truth, 30, 5.0, &rng);
        trigger1::PeakCandidate seed;
        seed.t_start = 12;
        seed.t_peak = 15;
        seed.t_end = 18;
        const auto constant = trigger2::fit_constant(curve);
        const auto single = trigger2::fit_pspl(curve, seed);
        const auto dbl = trigger2::fit_double(curve, {seed}, single);
        const auto rec = trigger2::classify_event(seed, trigger1::PeakClass::Single, constant,
                                                  single, &dbl, th);
        CHECK(!rec.accepted);
        CHECK(rec.model == trigger2::EventModel::Constant);
    }

    // Strong injected single event -> accepted single.
    {
        PsplParams truth{400.0, 200.0, 15.0, 3.0, 0.3};
        const auto curve = model_curve(truth, 30, 5.0, &rng);
        const auto seed = seed_for(truth);
        const auto constant = trigger2::fit_constant(curve);
        const auto single = trigger2::fit_pspl(curve, seed);
        const auto dbl = trigger2::fit_double(curve, {seed}, single);
        const auto rec = trigger2::classify_event(seed, trigger1::PeakClass::Single, constant,
                                                  single, &dbl, th);
        CHECK(rec.accepted);
        CHECK(rec.model == trigger2::EventModel::SinglePSPL);
        CHECK(rec.reason == "accepted-single");
    }

    // Injected double event -> accepted double.
    {
        trigger2::DoubleParams dt;
        dt.f_base = 400.0;
        dt.f_s1 = 300.0;
        dt.t01 = 11.0;
        dt.tE1 = 2.0;
        dt.u01 = 0.3;
        dt.f_s2 = 120.0;
        dt.t02 = 20.0;
        dt.tE2 = 2.0;
        dt.u02 = 0.35;
        LightCurve curve;
        for (int e = 0; e < 30; ++e)
            curve.samples.push_back(
                {static_cast<double>(e), trigger2::double_flux(e, dt) + rng.gaussian(0.0, 2.0),
                 2.0, true});
        trigger1::PeakCandidate c1, c2;
        c1.t_start = 8;
        c1.t_peak = 11;
        c1.t_end = 14;
        c1.significance = 100;
        c2.t_start = 18;
        c2.t_peak = 20;
        c2.t_end = 22;
        c2.significance = 50;
        const auto constant = trigger2::fit_constant(curve);
        const auto single = trigger2::fit_pspl(curve, c1);
        const auto dbl = trigger2::fit_double(curve, {c1, c2}, single);
        const auto rec = trigger2::classify_event(c1, trigger1::PeakClass::Double, constant,
                                                  single, &dbl, th);
        CHECK(rec.accepted);
        CHECK(rec.model == trigger2::EventModel::DoublePSPL);
        CHECK(rec.has_secondary);
    }
}
