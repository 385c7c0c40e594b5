#ifndef OAM_CONFIG_HPP_
#define OAM_CONFIG_HPP_

#include <string>

#include "oam/controller.hpp"
#include "oam/planner_nmpc.hpp"
#include "oam/planner_offline.hpp"
#include "oam/robot_model.hpp"
#include "oam/sim.hpp"

namespace oam {

// Everything the stack needs about the vehicle, in one bundle. Defaults are
// the desk-scale model; any subset can be overridden from a JSON file.
struct OamConfig {
  PlantParams plant;
  AllocationConfig allocation;
  ManipulatorModel arm;
  BodyEllipsoidSet bodies;
  GainSet gains;
  PlantOptions plant_options;
  OfflinePlanParams offline;
  NmpcParams nmpc;

  OamConfig() { bodies = BodyEllipsoidSet::default_for(arm); }
};

OamConfig load_config(const std::string& path);
OamConfig parse_config(const std::string& json_text);
std::string default_config_json();

}  // namespace oam

#endif  // OAM_CONFIG_HPP_
