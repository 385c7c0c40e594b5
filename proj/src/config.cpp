#include "oam/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace oam {

namespace {

using nlohmann::json;

Vec3 get_vec3(const json& j, const char* key, const Vec3& def) {
  if (!j.contains(key)) return def;
  const auto& a = j.at(key);
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

double get_num(const json& j, const char* key, double def) {
  return j.contains(key) ? j.at(key).get<double>() : def;
}

bool get_bool(const json& j, const char* key, bool def) {
  return j.contains(key) ? j.at(key).get<bool>() : def;
}

}  // namespace

OamConfig parse_config(const std::string& text) {
  OamConfig cfg;
  const json j = json::parse(text);

  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    cfg.plant.m = get_num(p, "m", cfg.plant.m);
    cfg.plant.m_bar = get_num(p, "m_bar", cfg.plant.m_bar);
    cfg.plant.g = get_num(p, "g", cfg.plant.g);
    cfg.plant.J_b = get_vec3(p, "J", Vec3(0.02, 0.025, 0.035)).asDiagonal();
    cfg.plant.J_bar = get_vec3(p, "J_bar", Vec3(0.02, 0.025, 0.035)).asDiagonal();
    cfg.plant.validate();
  }
  if (j.contains("allocation")) {
    const auto& a = j.at("allocation");
    cfg.allocation.L = get_num(a, "L", cfg.allocation.L);
    cfg.allocation.k_f = get_num(a, "k_f", cfg.allocation.k_f);
    if (a.contains("W")) {
      for (int i = 0; i < 12; ++i) cfg.allocation.W_diag(i) = a.at("W")[i].get<double>();
    }
    cfg.allocation.validate();
  }
  if (j.contains("arm")) {
    const auto& a = j.at("arm");
    if (a.contains("link_lengths")) {
      cfg.arm.link_lengths.clear();
      for (const auto& v : a.at("link_lengths")) cfg.arm.link_lengths.push_back(v.get<double>());
    }
    cfg.arm.mount_offset = get_vec3(a, "mount_offset", cfg.arm.mount_offset);
    if (a.contains("joint_axes")) {
      cfg.arm.joint_axes.clear();
      for (const auto& ax : a.at("joint_axes")) {
        cfg.arm.joint_axes.push_back(
            Vec3(ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>())
                .normalized());
      }
    }
    if (a.contains("joint_limits_deg")) {
      const auto& lim = a.at("joint_limits_deg");
      const int n = cfg.arm.joints();
      VecX lo(n), hi(n);
      for (int i = 0; i < n; ++i) {
        lo(i) = lim.at("lower")[i].get<double>() * M_PI / 180.0;
        hi(i) = lim.at("upper")[i].get<double>() * M_PI / 180.0;
      }
      cfg.arm.set_joint_box_limits(lo, hi);
    }
    cfg.bodies = BodyEllipsoidSet::default_for(cfg.arm);
  }
  if (j.contains("bodies")) {
    const auto& b = j.at("bodies");
    const Vec3 base_axes = get_vec3(b, "base_semi_axes", Vec3(0.35, 0.35, 0.10));
    cfg.bodies.bodies[0].shape0 = base_axes.cwiseProduct(base_axes).asDiagonal();
    cfg.bodies.bodies[0].ground_radius =
        get_num(b, "base_ground_radius", base_axes.maxCoeff() + 0.01);
    const double r = get_num(b, "link_radius", 0.04);
    for (size_t i = 1; i < cfg.bodies.bodies.size(); ++i) {
      const double half = 0.5 * cfg.arm.link_lengths[i - 1];
      cfg.bodies.bodies[i].offset = Vec3(0, 0, half);
      cfg.bodies.bodies[i].shape0 =
          Vec3(r * r, r * r, (half + r) * (half + r)).asDiagonal();
      cfg.bodies.bodies[i].ground_radius = half + r;
    }
    cfg.bodies.validate();
  }
  if (j.contains("gains")) {
    const auto& g = j.at("gains");
    GainSet& K = cfg.gains;
    K.K_tp = get_vec3(g, "K_tp", K.K_tp);
    K.K_td = get_vec3(g, "K_td", K.K_td);
    K.K_ti = get_vec3(g, "K_ti", K.K_ti);
    K.Lambda_t = get_vec3(g, "Lambda_t", K.Lambda_t);
    K.Gamma_t = get_vec3(g, "Gamma_t", K.Gamma_t);
    K.Theta_t = get_vec3(g, "Theta_t", K.Theta_t);
    K.rho_t = get_num(g, "rho_t", K.rho_t);
    K.K_rp = get_vec3(g, "K_rp", K.K_rp);
    K.K_rd = get_vec3(g, "K_rd", K.K_rd);
    K.K_ri = get_vec3(g, "K_ri", K.K_ri);
    K.Lambda_r = get_vec3(g, "Lambda_r", K.Lambda_r);
    K.Gamma_r = get_vec3(g, "Gamma_r", K.Gamma_r);
    K.Theta_r = get_vec3(g, "Theta_r", K.Theta_r);
    K.rho_r = get_num(g, "rho_r", K.rho_r);
    K.validate();
  }
  if (j.contains("plant_options")) {
    const auto& p = j.at("plant_options");
    cfg.plant_options.actuator_lags = get_bool(p, "actuator_lags", true);
    cfg.plant_options.tau_rotor = get_num(p, "tau_rotor", 0.03);
    cfg.plant_options.tau_servo = get_num(p, "tau_servo", 0.06);
    cfg.plant_options.joint_omega_n = get_num(p, "joint_omega_n", 20.0);
  }
  if (j.contains("offline")) {
    const auto& o = j.at("offline");
    cfg.offline.T_f = get_num(o, "T_f", cfg.offline.T_f);
    cfg.offline.dt = get_num(o, "dt", cfg.offline.dt);
    cfg.offline.gamma_rate = get_num(o, "gamma_rate", cfg.offline.gamma_rate);
    cfg.offline.margin = get_num(o, "margin", cfg.offline.margin);
    cfg.offline.ee_radius = get_num(o, "ee_radius", cfg.offline.ee_radius);
  }
  if (j.contains("nmpc")) {
    const auto& n = j.at("nmpc");
    cfg.nmpc.T_H = get_num(n, "T_H", cfg.nmpc.T_H);
    cfg.nmpc.dt = get_num(n, "dt", cfg.nmpc.dt);
    cfg.nmpc.Q_p = get_num(n, "Q_p", cfg.nmpc.Q_p);
    cfg.nmpc.Q_R = get_num(n, "Q_R", cfg.nmpc.Q_R);
    cfg.nmpc.mu_v = get_num(n, "mu_v", cfg.nmpc.mu_v);
    if (n.contains("R_u")) {
      cfg.nmpc.r_v = n.at("R_u")[0].get<double>();
      cfg.nmpc.r_omega = n.at("R_u")[1].get<double>();
      cfg.nmpc.r_theta_dot = n.at("R_u")[2].get<double>();
    }
    if (n.contains("u_max")) {
      cfg.nmpc.v_max = n.at("u_max")[0].get<double>();
      cfg.nmpc.omega_max = n.at("u_max")[1].get<double>();
      cfg.nmpc.theta_dot_max = n.at("u_max")[2].get<double>();
    }
    cfg.nmpc.margin = get_num(n, "margin", cfg.nmpc.margin);
  }
  return cfg;
}

OamConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string default_config_json() {
  json j;
  j["plant"] = {{"m", 2.13}, {"m_bar", 2.13}, {"J", {0.02, 0.025, 0.035}},
                {"J_bar", {0.02, 0.025, 0.035}}, {"g", 9.81}};
  j["allocation"] = {{"L", 0.018},
                     {"k_f", 0.015},
                     {"W", {1, 1, 0.6, 0.6, 1, 1, 1, 1, 0.6, 0.6, 1, 1}}};
  j["arm"] = {{"link_lengths", {0.15, 0.12, 0.10}},
              {"mount_offset", {0.0, 0.0, 0.10}},
              {"joint_axes", {{0, 1, 0}, {0, 1, 0}, {0, 1, 0}}},
              {"joint_limits_deg",
               {{"lower", {-100, -120, -120}}, {"upper", {100, 120, 120}}}}};
  j["bodies"] = {{"base_semi_axes", {0.35, 0.35, 0.10}},
                 {"base_ground_radius", 0.36},
                 {"link_radius", 0.04}};
  j["gains"] = {{"K_tp", {8, 8, 8}},       {"K_td", {5, 5, 5}},
                {"K_ti", {2, 2, 4}},       {"Lambda_t", {3, 2, 2}},
                {"Gamma_t", {2, 2, 2}},    {"Theta_t", {3, 3, 3}},
                {"rho_t", 1.0},            {"K_rp", {15, 20, 10}},
                {"K_rd", {10, 9, 5}},      {"K_ri", {0.08, 0.08, 0.08}},
                {"Lambda_r", {8, 8, 8}},   {"Gamma_r", {0.2, 0.2, 0.2}},
                {"Theta_r", {10, 10, 10}}, {"rho_r", 0.02}};
  j["plant_options"] = {{"actuator_lags", true},
                        {"tau_rotor", 0.03},
                        {"tau_servo", 0.06},
                        {"joint_omega_n", 20.0}};
  j["offline"] = {{"T_f", 15.0}, {"dt", 0.1}, {"gamma_rate", 3.0},
                  {"margin", 1e-3}, {"ee_radius", 0.05}};
  j["nmpc"] = {{"T_H", 1.5},
               {"dt", 0.1},
               {"Q_p", 5.0},
               {"Q_R", 4.0},
               {"mu_v", 0.01},
               {"R_u", {0.01, 0.01, 0.1}},
               {"u_max", {1.0, 0.5 * M_PI, 0.25 * M_PI}},
               {"margin", 1e-3}};
  return j.dump(2);
}

}  // namespace oam
