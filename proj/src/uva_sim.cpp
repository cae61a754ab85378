// Synthetic glucose cohort from the S2013 equation set. Parameter magnitudes
// follow published adult-average values; kp1 and the basal glucagon secretion
// are re-derived per instance from the basal steady state so each trajectory
// starts at equilibrium. The delayed glucagon secretion term is treated
// algebraically (eta * max(-dG/dt, 0)), the usual reading of the model.

#include <algorithm>
#include <cmath>

#include "hgs/data.hpp"

namespace hgs::data {

namespace {

struct UvaParams {
  // glucose kinetics
  double VG = 1.88, k1 = 0.065, k2 = 0.079;
  // insulin kinetics
  double VI = 0.05, m1 = 0.19, m2 = 0.484, m3 = 0.285, m4 = 0.194;
  // rate of appearance
  double kgri = 0.0558, kmax = 0.0558, kmin = 0.0080, kabs = 0.057;
  double alpha = 0.00013, beta = 0.00236, bb = 0.82, cc = 0.010, f = 0.90, BW = 70.0;
  // endogenous production
  double kp1 = 2.70, kp2 = 0.0021, kp3 = 0.009, ki = 0.0079, xi = 0.05;
  // utilization
  double Fcns = 1.0, Vm0 = 2.50, Vmx = 0.047, Km0 = 225.59, p2U = 0.0331;
  double r1 = 1.5, r2 = 1.0, Gb = 130.0, Gth = 60.0;
  // renal excretion
  double ke1 = 0.0005, ke2 = 339.0;
  // subcutaneous insulin
  double kd = 0.0164, ka1 = 0.0018, ka2 = 0.0182;
  // subcutaneous glucose
  double Ts = 0.1;
  // glucagon
  double n = 0.22, rho = 0.86, sigma = 1.0, sigma2 = 0.05, kH = 0.1, Hb = 93.0, eta = 0.27;
  double kh1 = 0.02, kh2 = 0.02, kh3 = 0.05;
  double SRHb = 0.0;  // derived
  double Ib = 0.0;    // derived
};

struct UvaState {
  double Gp, Gt, Ip, Il, Qsto1, Qsto2, Qgut, XL, Ir, XH, X, E, Isc1, Isc2, Gs, H, SRsH, SRdH,
      Hsc1, Hsc2;
};

// One Euler step of the S2013 right-hand side under exogenous rates
// delta (mg/min), iir (pmol/kg/min) and hinf (basal-adjusted glucagon, 0 here).
void step(UvaState& s, const UvaParams& P, double delta, double iir, double hinf, double D,
          double dt) {
  double G = s.Gp / P.VG;
  double I = s.Ip / P.VI;
  double Qsto = s.Qsto1 + s.Qsto2;
  double kempt =
      P.kmin + (P.kmax - P.kmin) *
                   (std::tanh(P.alpha * (Qsto - P.bb * D)) - std::tanh(P.beta * (Qsto - P.cc * D)) + 2.0) /
                   2.0;
  double Ra = P.f * P.kabs * s.Qgut / P.BW;
  double EGP = P.kp1 - P.kp2 * s.Gp - P.kp3 * s.XL + P.xi * s.XH;
  double Gsafe = std::max(G, 1.0);
  double risk;
  if (G >= P.Gb)
    risk = 0.0;
  else if (G >= P.Gth)
    risk = 10.0 * std::pow(std::log(Gsafe) - std::log(P.Gb), 2.0 * P.r2);
  else
    risk = 10.0 * std::pow(std::log(P.Gth) - std::log(P.Gb), 2.0 * P.r2);
  double Uid = (P.Vm0 + P.Vmx * s.X * (1.0 + P.r1 * risk)) * s.Gt / (P.Km0 + s.Gt);
  double Uii = P.Fcns;
  double Rai = P.ka1 * s.Isc1 + P.ka2 * s.Isc2;
  double SRH = s.SRsH + s.SRdH;
  double RaH = P.kh3 * s.Hsc2;

  double dGp = EGP + Ra - Uii - s.E - P.k1 * s.Gp + P.k2 * s.Gt;
  double dGt = -Uid + P.k1 * s.Gp - P.k2 * s.Gt;
  double dIp = -(P.m2 + P.m4) * s.Ip + P.m1 * s.Il + Rai;
  double dIl = -(P.m1 + P.m3) * s.Il + P.m2 * s.Ip;
  double dQsto1 = -P.kgri * s.Qsto1 + delta;
  double dQsto2 = -kempt * s.Qsto2 + P.kgri * s.Qsto1;
  double dQgut = -P.kabs * s.Qgut + kempt * s.Qsto2;
  double dXL = -P.ki * (s.XL - s.Ir);
  double dIr = -P.ki * (s.Ir - I);
  double dXH = -P.kH * s.XH + P.kH * std::max(s.H - P.Hb, 0.0);
  double dX = -P.p2U * s.X + P.p2U * (I - P.Ib);
  double dE = P.ke1 * std::max(s.Gp - P.ke2, 0.0);
  double dIsc1 = -(P.kd + P.ka1) * s.Isc1 + iir;
  double dIsc2 = P.kd * s.Isc1 - P.ka2 * s.Isc2;
  double dGs = -P.Ts * s.Gs + P.Ts * G;
  double dH = -P.n * s.H + SRH + RaH;
  double target = G >= P.Gb ? std::max(P.sigma2 * (P.Gth - G) + P.SRHb, 0.0)
                            : std::max(P.sigma * (P.Gth - G) / (I + 1.0) + P.SRHb, 0.0);
  double dSRsH = -P.rho * (s.SRsH - target);
  double dGdt = dGp / P.VG;
  double dHsc1 = -(P.kh1 + P.kh2) * s.Hsc1 + hinf;
  double dHsc2 = P.kh1 * s.Hsc1 - P.kh3 * s.Hsc2;

  s.Gp += dt * dGp;
  s.Gt += dt * dGt;
  s.Ip += dt * dIp;
  s.Il += dt * dIl;
  s.Qsto1 += dt * dQsto1;
  s.Qsto2 += dt * dQsto2;
  s.Qgut += dt * dQgut;
  s.XL += dt * dXL;
  s.Ir += dt * dIr;
  s.XH += dt * dXH;
  s.X += dt * dX;
  s.E += dt * dE;
  s.Isc1 += dt * dIsc1;
  s.Isc2 += dt * dIsc2;
  s.Gs += dt * dGs;
  s.H += dt * dH;
  s.SRsH += dt * dSRsH;
  s.SRdH = P.eta * std::max(-dGdt, 0.0);
  s.Hsc1 += dt * dHsc1;
  s.Hsc2 += dt * dHsc2;
}

}  // namespace

Dataset simulate_uva_cohort(const UvaSimOptions& opt) {
  Rng rng(opt.seed);
  Dataset d;
  d.meta.obs_channels = {"G"};
  d.meta.input_channels = {"delta", "IIR", "Hinf"};
  d.meta.dt = 5.0;

  const int stamps = 54;
  const double t_start = -300.0, t_end = stamps * 5.0;

  for (int k = 0; k < opt.size; ++k) {
    UvaParams P;
    P.Gb = rng.uniform(110.0, 150.0);
    P.Vmx *= rng.uniform(0.7, 1.3);
    P.kp2 *= rng.uniform(0.8, 1.2);
    P.kabs *= rng.uniform(0.8, 1.2);

    // events
    double basal_uph = rng.uniform(0.7, 1.3);             // U/hour
    double meal_grams = rng.uniform(40.0, 80.0);
    double meal_time = rng.uniform(60.0, 150.0);
    double carb_ratio = rng.uniform(8.0, 15.0);           // grams per unit
    double bolus_units = meal_grams / carb_ratio;
    double bolus_time = meal_time - rng.uniform(0.0, 15.0);
    bool snack = rng.next_double() < 0.35;
    double snack_grams = rng.uniform(15.0, 30.0);
    double snack_time = rng.uniform(180.0, 220.0);

    std::vector<Event> basal{{t_start, basal_uph}};
    std::vector<Event> bolus{{bolus_time, bolus_units}};
    std::vector<Event> carbs{{meal_time, meal_grams}};
    if (snack) carbs.push_back({snack_time, snack_grams});
    std::sort(carbs.begin(), carbs.end(),
              [](const Event& a, const Event& b) { return a.time < b.time; });

    RateFunction iir_f = insulin_rate(basal, merge_bolus(bolus));  // U/min
    RateFunction carb_f = carb_rate(carbs);                         // mg/min

    // basal steady state
    double iir_b = basal_uph / 60.0 * 6000.0 / P.BW;  // pmol/kg/min
    UvaState s{};
    s.Isc1 = iir_b / (P.kd + P.ka1);
    s.Isc2 = P.kd * s.Isc1 / P.ka2;
    double rai_b = P.ka1 * s.Isc1 + P.ka2 * s.Isc2;
    s.Ip = rai_b / ((P.m2 + P.m4) - P.m1 * P.m2 / (P.m1 + P.m3));
    s.Il = P.m2 * s.Ip / (P.m1 + P.m3);
    P.Ib = s.Ip / P.VI;
    s.Ir = P.Ib;
    s.XL = P.Ib;
    s.Gp = P.Gb * P.VG;
    {  // Gt from dGt = 0 with X = 0
      double a = P.k2, b = P.Vm0 + P.k2 * P.Km0 - P.k1 * s.Gp, c = -P.k1 * s.Gp * P.Km0;
      s.Gt = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
    }
    double uid_b = P.Vm0 * s.Gt / (P.Km0 + s.Gt);
    P.kp1 = P.Fcns + uid_b + P.kp2 * s.Gp + P.kp3 * P.Ib;  // basal closure
    s.Gs = P.Gb;
    s.H = P.Hb;
    P.SRHb = P.n * P.Hb - P.sigma2 * (P.Gth - P.Gb);
    s.SRsH = P.n * P.Hb;

    // integrate and sample the CGM grid
    std::vector<Event> cgm;
    double t = t_start;
    int next_stamp = 0;
    double meal_D = meal_grams * 1000.0;  // kempt's most recent meal size, mg
    while (t < t_end - 1e-9) {
      if (next_stamp < stamps && t >= next_stamp * 5.0 - 1e-9) {
        cgm.push_back({static_cast<double>(next_stamp) * 5.0, s.Gs});
        ++next_stamp;
      }
      if (snack && t >= snack_time) meal_D = snack_grams * 1000.0;
      double iir = iir_f.value_at(t) * 6000.0 / P.BW;  // U/min -> pmol/kg/min
      double delta = carb_f.value_at(t);               // mg/min
      step(s, P, delta, iir, 0.0, meal_D, opt.sim_dt);
      t += opt.sim_dt;
    }
    while (next_stamp < stamps) {
      cgm.push_back({static_cast<double>(next_stamp) * 5.0, s.Gs});
      ++next_stamp;
    }

    // assemble the instance on the 42/12 window with exact bin averages
    const int p = 41, q = 12;
    Instance inst;
    inst.past_obs = Mat(p + 1, 1);
    for (int i = 0; i <= p; ++i) inst.past_obs.at(i, 0) = cgm[i].value;
    inst.past_inputs = Mat(p, 3);
    inst.future_inputs = Mat(q, 3);
    for (int i = 0; i < p; ++i) {
      inst.past_inputs.at(i, 0) = carb_f.window_average(i * 5.0, 5.0);
      inst.past_inputs.at(i, 1) = iir_f.window_average(i * 5.0, 5.0);
      inst.past_inputs.at(i, 2) = 0.0;
    }
    for (int i = 0; i < q; ++i) {
      inst.future_inputs.at(i, 0) = carb_f.window_average((p + i) * 5.0, 5.0);
      inst.future_inputs.at(i, 1) = iir_f.window_average((p + i) * 5.0, 5.0);
      inst.future_inputs.at(i, 2) = 0.0;
    }
    inst.future_obs = Mat(q, 1);
    for (int i = 0; i < q; ++i) inst.future_obs.at(i, 0) = cgm[p + 1 + i].value;
    inst.t0 = p * 5.0;
    inst.dt = 5.0;
    d.instances.push_back(std::move(inst));
  }
  return d;
}

}  // namespace hgs::data
