#include "cvtslam/filters.hpp"
#include "oracle/oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cvtslam;

namespace {

VehicleParticles<double> vehicle_set(std::vector<Vector2<double>> pts, std::vector<double> w = {}) {
  VehicleParticles<double>::States s(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) s.col(static_cast<Eigen::Index>(i)) = pts[i];
  auto ps = VehicleParticles<double>::uniform(std::move(s));
  if (!w.empty()) ps.weights = Eigen::Map<VectorX<double>>(w.data(), static_cast<Eigen::Index>(w.size()));
  return ps;
}

CvtParticles<double> cvt_set(std::vector<Vector4<double>> pts, std::vector<double> w = {}) {
  CvtParticles<double>::States s(4, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) s.col(static_cast<Eigen::Index>(i)) = pts[i];
  auto ps = CvtParticles<double>::uniform(std::move(s));
  if (!w.empty()) ps.weights = Eigen::Map<VectorX<double>>(w.data(), static_cast<Eigen::Index>(w.size()));
  return ps;
}

PathObservation<double> obs_of(double range, double polar, double azimuth) {
  PathObservation<double> o;
  o.range = range;
  o.polar_angle = polar;
  o.azimuth_angle = azimuth;
  return o;
}

PathObservation<double> obs_toward(const Vector3<double>& from, const Vector3<double>& to) {
  const Vector3<double> d = to - from;
  const auto ang = angles_of<double>(d);
  return obs_of(d.norm(), ang[0], ang[1]);
}

}  // namespace

TEST(PropagateVehicle, ConstantVelocityShift) {
  auto ps = vehicle_set({{0, 0}, {5, -3}});
  Rng rng(1);
  const auto out = propagate_vehicle(ps, MotionCommand<double>{{10, 0}, {10, 0}, 0.1}, NoiseConfig<double>::zero(), rng);
  EXPECT_LE((out.states.col(0) - Vector2<double>(1, 0)).norm(), 1e-12);
  EXPECT_LE((out.states.col(1) - Vector2<double>(6, -3)).norm(), 1e-12);
  EXPECT_EQ(out.weights, ps.weights);
}

TEST(PropagateVehicle, TrapezoidOfTurningVelocity) {
  auto ps = vehicle_set({{0, 0}});
  Rng rng(1);
  const auto out = propagate_vehicle(ps, MotionCommand<double>{{10, 0}, {0, 10}, 0.1}, NoiseConfig<double>::zero(), rng);
  EXPECT_LE((out.states.col(0) - Vector2<double>(0.5, 0.5)).norm(), 1e-12);
}

TEST(PropagateVehicle, SpeedNoiseBound) {
  NoiseConfig<double> noise = NoiseConfig<double>::zero();
  noise.sigma_v = 0.1;
  std::vector<Vector2<double>> zeros(2000, Vector2<double>::Zero());
  auto ps = vehicle_set(zeros);
  Rng rng(2);
  const auto out = propagate_vehicle(ps, MotionCommand<double>{{10, 0}, {10, 0}, 0.1}, noise, rng);
  double worst = 0;
  for (Eigen::Index j = 0; j < out.count(); ++j) worst = std::max(worst, std::abs(out.states.col(j).norm() - 1.0));
  EXPECT_LE(worst, 0.02 + 1e-12);
  EXPECT_GT(worst, 0.01);
}

TEST(PropagateVehicle, RejectsNonPositiveDt) {
  auto ps = vehicle_set({{0, 0}});
  Rng rng(1);
  EXPECT_THROW(propagate_vehicle(ps, MotionCommand<double>{{1, 0}, {1, 0}, 0.0}, NoiseConfig<double>::zero(), rng), std::invalid_argument);
}

TEST(PerturbVelocity, HeadingRelativeVersusAbsolute) {
  NoiseConfig<double> noise = NoiseConfig<double>::zero();
  noise.sigma_v = 0.1;
  Rng a(5), b(5);
  const Vector2<double> v{0, 10};
  const auto rel = perturb_velocity(v, noise, VelocityNoiseMode::heading_relative, a);
  const auto abs = perturb_velocity(v, noise, VelocityNoiseMode::absolute, b);
  EXPECT_NEAR(rel.x(), 0.0, 1e-12);  // noise along the heading
  EXPECT_NEAR(abs.y(), 10.0, 1e-12);  // noise along +x
}

TEST(PropagateCvt, IdentityAndZeroRoughening) {
  auto ps = cvt_set({{1, 2, 3, 0.5}, {4, 5, 6, 0}}, {0.3, 0.7});
  const auto same = propagate_cvt(ps);
  EXPECT_EQ(same.states, ps.states);
  EXPECT_EQ(same.weights, ps.weights);
  Rng rng(3);
  const auto zero = propagate_cvt(ps, 0.0, 2.0, rng);
  EXPECT_EQ(zero.states, ps.states);
}

TEST(PropagateCvt, RougheningBound) {
  std::vector<Vector4<double>> pts(1000, Vector4<double>(1, 2, 3, 0.25));
  auto ps = cvt_set(pts);
  Rng rng(4);
  const auto out = propagate_cvt(ps, 0.3, 2.0, rng);
  for (Eigen::Index a = 0; a < out.count(); ++a) {
    EXPECT_LE(((out.states.col(a) - ps.states.col(a)).head<3>().cwiseAbs().maxCoeff()), 0.6 + 1e-12);
    EXPECT_EQ(out.states(3, a), 0.25);
  }
}

TEST(CvtWeightUpdate, TrueVtMaximizesLikelihood) {
  const Vector3<double> vt{70, 32, 8};
  const Vector2<double> truth{40, -2};
  auto veh = vehicle_set({truth});
  VehicleLink<double> link{0, &veh, obs_toward(lift(truth, 0.0), vt), 0.0};
  auto cvt = cvt_set({{vt.x(), vt.y(), vt.z(), 0}, {vt.x() + 0.3, vt.y(), vt.z(), 0}, {vt.x(), vt.y() - 1, vt.z() + 1, 0}});
  const auto ll = cvt_log_likelihood<double>(cvt, std::span(&link, 1), LikelihoodConfig<double>{});
  EXPECT_NEAR(ll[0], 0.0, 1e-12);
  EXPECT_LT(ll[1], ll[0]);
  EXPECT_LT(ll[2], ll[0]);
}

TEST(CvtWeightUpdate, EquidistantParticlesGetEqualWeights) {
  auto veh = vehicle_set({{0, 0}});
  VehicleLink<double> link{0, &veh, obs_of(10, 0, kPi<double> / 2), 0.0};  // r_hat = (10,0,0)
  auto cvt = cvt_set({{10, 1, 0, 0}, {10, -1, 0, 0}});
  const auto upd = cvt_weight_update<double>(cvt, std::span(&link, 1), LikelihoodConfig<double>::fixed(1.0));
  EXPECT_NEAR(upd.particles.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(upd.particles.weights[1], 0.5, 1e-12);
}

TEST(CvtWeightUpdate, MatchesHandRolledThreeVehicles) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  const Vector3<double> vt{70, 32, 8};
  std::vector<VehicleParticles<double>> vehicles;
  std::vector<std::vector<oracle::Vec2>> o_veh;
  std::vector<oracle::Obs> o_obs;
  std::vector<VehicleLink<double>> links;
  std::vector<double> heights{0.0, 0.5, 1.0}, scales;
  const std::vector<Vector2<double>> centers{{20, -5}, {60, 3}, {100, 9}};
  LikelihoodConfig<double> lc;
  for (int m = 0; m < 3; ++m) {
    const Vector2<double> p0 = centers[static_cast<std::size_t>(m)] + Vector2<double>(u(rng), u(rng));
    const Vector2<double> p1 = centers[static_cast<std::size_t>(m)] + Vector2<double>(u(rng), u(rng));
    vehicles.push_back(vehicle_set({p0, p1}));
    o_veh.push_back({{p0.x(), p0.y()}, {p1.x(), p1.y()}});
    auto o = obs_toward(lift(centers[static_cast<std::size_t>(m)], heights[static_cast<std::size_t>(m)]), vt);
    o.range += 0.1 * u(rng);
    o.polar_angle += 0.01 * u(rng);
    o.azimuth_angle += 0.01 * u(rng);
    o_obs.push_back({o.range, o.polar_angle, o.azimuth_angle});
    scales.push_back(lc.scale_for(o.range));
  }
  for (int m = 0; m < 3; ++m)
    links.push_back({m, &vehicles[static_cast<std::size_t>(m)], obs_of(o_obs[static_cast<std::size_t>(m)].range,
                                                                       o_obs[static_cast<std::size_t>(m)].polar,
                                                                       o_obs[static_cast<std::size_t>(m)].azimuth),
                     heights[static_cast<std::size_t>(m)]});
  const auto cvt = cvt_set({{70 + u(rng), 32 + u(rng), 8 + u(rng), 0.0}, {70 + u(rng), 32 + u(rng), 8 + u(rng), 0.3}}, {0.4, 0.6});
  const auto upd = cvt_weight_update<double>(cvt, links, lc);
  std::vector<oracle::CvtParticle> o_cvt;
  for (Eigen::Index a = 0; a < 2; ++a) o_cvt.push_back({cvt.states(0, a), cvt.states(1, a), cvt.states(2, a), cvt.states(3, a)});
  const auto ref = oracle::cvt_weights(o_cvt, {0.4, 0.6}, o_veh, o_obs, heights, scales);
  EXPECT_NEAR(upd.particles.weights[0], ref[0], 1e-12);
  EXPECT_NEAR(upd.particles.weights[1], ref[1], 1e-12);
  EXPECT_FALSE(upd.degenerate);
}

TEST(CvtWeightUpdate, NoVehiclesThrows) {
  const auto cvt = cvt_set({{0, 0, 0, 0}});
  EXPECT_THROW(cvt_weight_update<double>(cvt, {}, LikelihoodConfig<double>{}), std::invalid_argument);
}

TEST(VehicleWeightUpdate, TruePositionMaximizesLikelihood) {
  const Vector3<double> vt{70, -32, 8};
  const Vector2<double> truth{30, 5};
  auto cvt = cvt_set({{vt.x(), vt.y(), vt.z(), 0}});
  CvtLink<double> link{0, &cvt, obs_toward(lift(truth, 0.0), vt)};
  auto veh = vehicle_set({truth, truth + Vector2<double>(0.2, 0), truth + Vector2<double>(-1, 1)});
  const auto ll = vehicle_log_likelihood<double>(veh, std::span(&link, 1), LikelihoodConfig<double>{});
  EXPECT_NEAR(ll[0], 0.0, 1e-12);
  EXPECT_LT(ll[1], ll[0]);
  EXPECT_LT(ll[2], ll[0]);
}

TEST(VehicleWeightUpdate, LosRingSymmetry) {
  // every CVT particle at the BS; particles mirrored about the BS x-coordinate
  // and at the same distance from the back-projected point get equal weight
  auto cvt = cvt_set({{70, 0, 8, 0}, {70, 0, 8, 0}});
  CvtLink<double> link{0, &cvt, obs_of(std::sqrt(8.0 * 8.0 + 30.0 * 30.0), 0.0, std::atan2(30.0, 8.0))};
  // r_hat = BS - range*R = (70 - 30, 0)
  auto veh = vehicle_set({{40, 2}, {40, -2}});
  const auto upd = vehicle_weight_update<double>(veh, std::span(&link, 1), LikelihoodConfig<double>::fixed(1.5));
  EXPECT_NEAR(upd.particles.weights[0], upd.particles.weights[1], 1e-15);
}

TEST(VehicleWeightUpdate, MatchesHandRolledTwoClusters) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  const Vector2<double> truth{50, 2};
  const std::vector<Vector3<double>> vts{{70, 0, 8}, {70, 32, 8}};
  std::vector<CvtParticles<double>> clusters;
  std::vector<std::vector<oracle::CvtParticle>> o_cl;
  std::vector<oracle::Obs> o_obs;
  std::vector<double> scales;
  LikelihoodConfig<double> lc;
  for (const auto& v : vts) {
    std::vector<Vector4<double>> pts;
    std::vector<oracle::CvtParticle> op;
    for (int a = 0; a < 2; ++a) {
      const Vector4<double> p{v.x() + u(rng), v.y() + u(rng), v.z() + u(rng), 0.2 * (u(rng) + 1)};
      pts.push_back(p);
      op.push_back({p[0], p[1], p[2], p[3]});
    }
    clusters.push_back(cvt_set(pts, {0.3, 0.7}));
    o_cl.push_back(op);
    auto o = obs_toward(lift(truth, 0.0), v);
    o_obs.push_back({o.range + 0.1, o.polar_angle - 0.005, o.azimuth_angle + 0.005});
    scales.push_back(lc.scale_for(o_obs.back().range));
  }
  std::vector<CvtLink<double>> links;
  for (std::size_t k = 0; k < 2; ++k) links.push_back({static_cast<int>(k), &clusters[k], obs_of(o_obs[k].range, o_obs[k].polar, o_obs[k].azimuth)});
  const auto veh = vehicle_set({truth + Vector2<double>(u(rng), u(rng)), truth + Vector2<double>(u(rng), u(rng))}, {0.5, 0.5});
  const auto upd = vehicle_weight_update<double>(veh, links, lc);
  const auto ref = oracle::vehicle_weights({{veh.states(0, 0), veh.states(1, 0)}, {veh.states(0, 1), veh.states(1, 1)}}, {0.5, 0.5}, o_cl,
                                           o_obs, scales);
  EXPECT_NEAR(upd.particles.weights[0], ref[0], 1e-12);
  EXPECT_NEAR(upd.particles.weights[1], ref[1], 1e-12);
}

TEST(WeightUpdate, DegenerateLikelihoodResetsToUniform) {
  auto veh = vehicle_set({{0, 0}});
  VehicleLink<double> link{0, &veh, obs_of(10, 0, kPi<double> / 2), 0.0};
  // particles absurdly far away at a tiny kernel scale: exp underflows everywhere
  auto cvt = cvt_set({{1e6, 0, 0, 0}, {-1e6, 0, 0, 0}}, {0.9, 0.1});
  const auto upd = cvt_weight_update<double>(cvt, std::span(&link, 1), LikelihoodConfig<double>::fixed(1e-3));
  // log-domain weights survive the underflow; only a truly non-finite log
  // weight (zero prior everywhere) is degenerate
  EXPECT_NEAR(upd.particles.weights.sum(), 1.0, 1e-12);

  auto zero_prior = cvt_set({{10, 0, 0, 0}, {11, 0, 0, 0}}, {0.0, 0.0});
  const auto deg = cvt_weight_update<double>(zero_prior, std::span(&link, 1), LikelihoodConfig<double>::fixed(1.0));
  EXPECT_TRUE(deg.degenerate);
  EXPECT_NEAR(deg.particles.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(deg.particles.weights[1], 0.5, 1e-15);
}

TEST(LikelihoodConfig, AdaptiveScaleAndFloor) {
  LikelihoodConfig<double> lc;
  EXPECT_NEAR(lc.scale_for(100.0), 0.2 + 100.0 * deg2rad(1.0), 1e-15);
  lc.sigma_d = 0;
  lc.sigma_alpha = 0;
  EXPECT_EQ(lc.scale_for(50.0), 0.01);
  EXPECT_EQ(LikelihoodConfig<double>::fixed(2.0).scale_for(1000.0), 2.0);
}

TEST(Resample, SystematicOffspringCounts) {
  auto ps = vehicle_set({{0, 0}, {1, 0}, {2, 0}, {3, 0}}, {0.75, 0.25, 0.0, 0.0});
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const auto out = resample(ps, rng);
    int a = 0, b = 0;
    for (Eigen::Index j = 0; j < 4; ++j) (out.states(0, j) == 0.0 ? a : b)++;
    EXPECT_EQ(a, 3);
    EXPECT_EQ(b, 1);
    EXPECT_NEAR(out.weights.sum(), 1.0, 1e-12);
  }
}

TEST(Resample, UniformWeightsReproduceInput) {
  auto ps = vehicle_set({{0, 0}, {1, 5}, {2, 7}, {3, -1}, {4, 4}});
  Rng rng(10);
  for (int t = 0; t < 50; ++t) EXPECT_EQ(resample(ps, rng).states, ps.states);
}

TEST(Resample, SingleHeavyParticle) {
  auto ps = vehicle_set({{0, 0}, {1, 1}, {2, 2}}, {0.0, 1.0, 0.0});
  Rng rng(11);
  const auto out = resample(ps, rng);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(out.states.col(j), Vector2<double>(1, 1));
}

TEST(Resample, ExpectedOffspringWithinOne) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0, 1);
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vector2<double>> pts;
    std::vector<double> w;
    for (int i = 0; i < 10; ++i) {
      pts.push_back({double(i), 0});
      w.push_back(u(gen));
    }
    auto ps = vehicle_set(pts, w);
    ps.normalize();
    const auto out = resample(ps, rng);
    for (int i = 0; i < 10; ++i) {
      const auto n = (out.states.row(0).array() == double(i)).count();
      EXPECT_LE(std::abs(double(n) - 10.0 * ps.weights[i]), 1.0 + 1e-12);
    }
  }
}

TEST(Resample, MatchesOracleIndices) {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vector2<double>> pts;
    std::vector<double> w;
    for (int i = 0; i < 7; ++i) {
      pts.push_back({double(i), 0});
      w.push_back(u(gen));
    }
    auto ps = vehicle_set(pts, w);
    ps.normalize();
    Rng a(100 + t), b(100 + t);
    const auto out = resample(ps, a);
    const double u0 = std::uniform_real_distribution<double>(0, 1)(b);
    const auto idx = oracle::systematic_indices(std::vector<double>(ps.weights.data(), ps.weights.data() + 7), u0);
    for (Eigen::Index k = 0; k < 7; ++k) EXPECT_EQ(out.states(0, k), double(idx[static_cast<std::size_t>(k)]));
  }
}

TEST(MaybeResample, EssThreshold) {
  auto ps = vehicle_set({{0, 0}, {1, 0}}, {0.6, 0.4});
  Rng rng(14);
  const auto kept = maybe_resample(ps, ResamplePolicy{0.5}, rng);  // ESS = 1.92 >= 1
  EXPECT_EQ(kept.weights, ps.weights);
  const auto forced = maybe_resample(ps, ResamplePolicy{}, rng);
  EXPECT_NEAR(forced.weights[0], 0.5, 1e-15);
}

TEST(EstimateState, WeightedMean) {
  EXPECT_EQ(estimate_state(vehicle_set({{3, 4}})), Vector2<double>(3, 4));
  EXPECT_LE((estimate_state(vehicle_set({{0, 0}, {2, 0}}, {0.5, 0.5})) - Vector2<double>(1, 0)).norm(), 1e-15);
  EXPECT_LE((estimate_state(vehicle_set({{0, 0}, {10, 0}}, {0.9, 0.1})) - Vector2<double>(1, 0)).norm(), 1e-12);
}

TEST(EstimateState, InsideBoundingBox) {
  std::mt19937_64 gen(15);
  std::uniform_real_distribution<double> u(-5, 5), w(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vector2<double>> pts;
    std::vector<double> ws;
    for (int i = 0; i < 6; ++i) {
      pts.push_back({u(gen), u(gen)});
      ws.push_back(w(gen));
    }
    auto ps = vehicle_set(pts, ws);
    ps.normalize();
    const auto e = estimate_state(ps);
    EXPECT_TRUE((e.array() >= ps.states.rowwise().minCoeff().array() - 1e-12).all());
    EXPECT_TRUE((e.array() <= ps.states.rowwise().maxCoeff().array() + 1e-12).all());
  }
}

TEST(InitVehicleParticles, ZeroSpreadAndBounds) {
  Rng rng(16);
  const auto flat = init_vehicle_particles<double>({3, 4}, NoiseConfig<double>::zero(), 10, rng);
  for (Eigen::Index j = 0; j < 10; ++j) EXPECT_EQ(flat.states.col(j), Vector2<double>(3, 4));
  NoiseConfig<double> noise;
  const auto ps = init_vehicle_particles<double>({0, 0}, noise, 100000, rng);
  EXPECT_LE(ps.states.cwiseAbs().maxCoeff(), 6.0);
  const double sd = std::sqrt(ps.states.row(0).array().square().mean() - std::pow(ps.states.row(0).mean(), 2));
  EXPECT_NEAR(sd, 3.0 * std::sqrt(oracle::truncated_normal_variance(2.0)), 0.02);
  EXPECT_NEAR(3.0 * std::sqrt(oracle::truncated_normal_variance(2.0)), 2.64, 0.01);
  EXPECT_NEAR(ps.weights.sum(), 1.0, 1e-9);
}

TEST(InitCvtParticles, CenteredOnMemberMean) {
  Rng rng(17);
  std::vector<VtEstimate<double>> members(2);
  members[0].position = {0, 0, 0};
  members[1].position = {2, 0, 0};
  members[1].additional_distance = 1.0;
  const auto flat = init_cvt_particles<double>(members, 0.0, 2.0, 5, rng);
  for (Eigen::Index a = 0; a < 5; ++a) EXPECT_EQ(flat.states.col(a), Vector4<double>(1, 0, 0, 0.5));
  const auto cloud = init_cvt_particles<double>(members, 1.0, 2.0, 50000, rng);
  EXPECT_NEAR(cloud.states(0, Eigen::all).mean(), 1.0, 0.02);
  EXPECT_NEAR(cloud.states(1, Eigen::all).mean(), 0.0, 0.02);
  EXPECT_LE((cloud.states.topRows<3>().colwise() - Vector3<double>(1, 0, 0)).cwiseAbs().maxCoeff(), 2.0);
  EXPECT_THROW(init_cvt_particles<double>({}, 1.0, 2.0, 5, rng), std::invalid_argument);
}
