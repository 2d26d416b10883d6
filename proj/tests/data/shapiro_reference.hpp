// Shapiro-Wilk reference values from scipy.stats.shapiro (scipy 1.15.3).
// Inputs rounded to 6 decimals before the reference run.
#pragma once
#include <vector>

struct ShapiroReference {
  const char* label;
  std::vector<double> x;
  double w;
  double p;
};

inline const std::vector<ShapiroReference>& shapiro_references() {
  static const std::vector<ShapiroReference> refs = {
      {"normal n=3",
       {
        -0.211189, -0.517733, 0.149596},
       0.997802652327, 0.910440853861},
      {"uniform n=4",
       {
        0.112481, 0.786025, 0.519942, 0.936264},
       0.952351491054, 0.730829914434},
      {"exp n=5",
       {
        0.067567, 0.455640, 1.024455, 2.429846, 0.106431},
       0.835613246931, 0.153156678828},
      {"normal n=7",
       {
        -0.927863, -0.933168, -1.470037, -0.787689, 0.319414, 0.857270, 0.228800},
       0.912907619121, 0.416373400839},
      {"lognormal n=11",
       {
        1.035412, 0.420022, 1.216247, 0.442334, 1.270777, 0.816610, 2.353770, 1.224424, 3.930731, 0.664836,
        2.129623},
       0.836961683789, 0.0288135103091},
      {"uniform n=12",
       {
        0.147346, 0.220883, 0.467331, 0.990635, 0.546345, 0.059071, 0.501687, 0.491724, 0.072014, 0.432652,
        0.531162, 0.364217},
       0.906866665471, 0.19447041848},
      {"t3 n=20",
       {
        -1.061490, -0.752411, 2.047417, -0.587484, -0.769240, -2.047119, -2.222711, -0.028164, 0.260028,
        -0.580475, -0.532489, 1.424701, -1.215645, -0.530590, -0.736619, -0.716095, -1.165889, -0.671043,
        1.624116, 1.875757},
       0.881210753376, 0.0186033401441},
      {"normal n=50",
       {
        -1.450914, 0.286455, -1.267217, 1.097693, 0.147165, 0.811057, 0.162714, 1.238331, -0.456355, 0.050068,
        1.400115, -1.258311, 0.192527, 0.975257, -1.063533, -0.699719, -1.249911, 1.180756, -0.189380,
        -0.315153, -1.412544, -1.063788, 0.926532, -0.189466, -0.400887, 0.791898, -0.905870, 1.613377,
        -0.368215, -0.513043, -0.265165, 0.037342, 0.701169, -0.698836, -0.824027, 0.038157, 0.338946,
        0.877255, -0.476753, 0.967012, -1.019893, 1.385778, -1.092072, -0.086264, 0.195294, 1.013168,
        1.460168, 0.049231, 1.895644, -0.819525},
       0.961663465129, 0.104373791499},
      {"exp n=137",
       {
        1.392639, 0.083576, 1.685892, 0.231035, 0.497083, 0.843625, 2.186018, 0.148736, 0.056084, 0.669977,
        0.051750, 0.268639, 0.260727, 0.009670, 0.623996, 0.359099, 1.070657, 1.150524, 1.919181, 1.223752,
        0.407497, 0.362170, 0.180741, 0.605556, 0.837826, 0.350792, 0.586062, 0.943198, 1.826427, 0.333122,
        0.181669, 2.810642, 0.600098, 0.138048, 1.109097, 1.590932, 0.182328, 2.545156, 0.244359, 0.601301,
        0.195588, 0.892270, 0.295554, 1.062016, 1.609517, 2.408305, 2.360043, 0.873767, 1.557778, 0.908512,
        0.668523, 0.584882, 0.008231, 0.889440, 1.052271, 0.581425, 0.400758, 0.831712, 1.915492, 0.170982,
        0.093822, 1.317682, 0.730547, 2.327847, 0.195044, 0.358423, 2.866338, 1.851218, 0.239932, 0.272890,
        0.754536, 1.541616, 0.392765, 0.808163, 2.106209, 0.834332, 0.220668, 0.801900, 1.972742, 0.695914,
        0.733706, 0.936941, 0.173521, 0.954990, 0.006297, 2.022929, 0.895116, 0.150290, 0.260893, 0.646427,
        0.093071, 0.233288, 2.396708, 0.215676, 0.097852, 0.014065, 0.299128, 1.688615, 0.007065, 2.302559,
        0.198119, 1.719840, 2.560577, 1.649872, 0.033867, 0.059149, 0.691374, 0.684066, 0.365857, 0.024054,
        0.178771, 0.453412, 0.523146, 0.133825, 0.509003, 0.623015, 0.960271, 0.168130, 0.473070, 0.445319,
        2.075610, 1.720479, 2.673191, 0.669257, 2.413971, 0.608025, 1.256466, 2.322203, 1.665886, 1.145909,
        0.494750, 0.209165, 0.698556, 1.462340, 0.075492, 0.907443, 1.027281},
       0.885061716091, 6.87986340648e-09},
      {"normal n=500",
       {
        1.875184, 1.575058, 0.304668, 1.466477, -0.793127, -1.329979, 0.252625, 1.803245, -0.228410, 0.753965,
        1.258770, 0.044465, 0.841013, -0.660806, 1.290076, 0.421093, 0.067503, -0.629757, -2.855521, 0.318864,
        0.002958, -0.116153, -0.397255, 1.884582, -0.086728, -0.081639, -0.003438, -1.072078, -0.536420,
        -0.344260, 0.316764, 0.598286, -0.755304, 1.056818, -2.390088, 1.513910, 0.658266, 0.826274, 0.139279,
        0.413582, 0.331261, -0.347282, -0.908724, 0.418662, 0.269630, -0.672572, 0.058685, -0.726642,
        2.394722, 0.547017, 0.645809, 0.912559, -3.508473, 0.032456, 1.121530, -1.109613, 0.364178, 0.603861,
        -1.237428, 3.115592, 0.108925, -0.032093, 0.072674, 1.313571, 2.631431, -0.411217, -1.761728,
        0.659555, 0.278610, 1.360614, -1.365431, -0.287748, 0.034168, -0.189834, -0.352316, -0.465575,
        1.687336, -0.333408, 1.171763, -0.102714, 0.651707, 1.190345, 0.548055, -2.143499, -1.136204,
        -0.658138, 0.625169, -0.821499, -0.955554, 1.322757, 2.131113, -1.038614, -0.280464, 0.074135,
        -1.155018, -0.523130, -1.698815, 0.381784, -0.288949, -1.374406, -2.266801, 1.218819, -0.015656,
        -2.324905, 0.049701, 2.145817, -0.058306, 1.175024, -1.442665, 1.108418, -1.427362, 0.589287,
        -0.398202, 0.298569, 0.723057, -0.826044, -1.384272, 1.770867, 0.722910, 0.558329, 0.078813, 2.202898,
        0.841601, -1.958882, -0.084033, 0.087695, -2.437341, -1.478240, 0.914337, -0.450618, 1.225552,
        -0.588666, -1.467575, 2.747105, 0.677600, -0.307279, 1.159579, -0.097932, -0.872205, 0.710286,
        0.268271, -0.747772, 0.128675, -0.639661, 1.846305, 0.664146, -0.128659, -0.796907, -1.008260,
        1.589799, -0.152170, 1.051533, 0.884068, 2.091780, 0.117155, -0.172993, -0.159407, -0.470479,
        0.650806, 0.780920, 0.971936, -3.405385, -0.722218, -0.575429, -0.801544, 1.180528, -0.526971,
        -0.858141, 0.313927, -0.484093, 0.006131, -0.720447, -0.869680, 0.656471, -0.022340, -0.654170,
        -0.136218, 0.147902, -1.366716, 0.263388, 0.559980, -0.618523, 0.242738, -1.983966, -0.543227,
        0.633863, -0.343046, 1.020916, 0.115067, 0.163129, -1.984321, -1.486958, -0.336396, -0.113204,
        1.036622, -0.019572, 1.058338, -1.236588, 1.959669, -0.563081, -0.966777, -1.158187, -1.596523,
        0.323027, -0.644061, -1.129518, -0.432522, -0.712724, 1.365666, -0.399606, 0.186262, -0.446354,
        1.423266, -0.540458, -0.389683, -1.282432, 0.270307, 0.162972, 1.375252, 1.356472, 2.304748, 0.493139,
        0.525332, -0.259965, 0.324325, -0.775316, -0.200146, -0.015089, 0.679834, 0.923631, -1.130462,
        -0.916653, -0.291240, -0.411027, -0.403743, -1.506159, -0.073903, -0.542074, 0.200733, 0.143639,
        -0.965528, 0.401038, 0.454533, -1.571237, 0.616192, -0.412264, 0.155004, 0.030293, -0.483267,
        -1.781798, 0.040482, -0.575353, -0.275669, 1.422505, -1.449494, -0.579303, 0.706059, -0.719409,
        1.696606, 1.524602, -1.730443, 1.897718, -0.452424, -0.222566, 2.256662, 2.288058, -0.187754,
        -0.891548, 0.064545, 0.956988, -0.673766, 0.517112, 0.099900, -0.028634, 1.002111, -1.468715,
        -1.342941, -0.703697, 0.834154, 0.662610, -0.172825, 0.605954, -1.274271, -0.583588, 0.668820,
        1.500819, -0.514020, 0.002054, -0.943615, -0.650024, 0.216952, 0.561661, -1.037073, -0.305954,
        0.653466, 1.274120, -1.278791, -0.406422, -0.258191, -0.249077, 0.246302, -0.395684, 0.188826,
        1.288617, 1.282189, -0.498900, -0.194802, 0.563531, -0.402169, -0.525126, -0.946492, -0.584056,
        -0.946557, -0.836067, -0.674115, -0.135128, 1.765405, 1.616350, 0.353286, 0.406514, 0.659865,
        -0.053932, -0.306974, 1.411973, -1.398636, 1.192023, -0.901065, -1.691213, 0.696832, -0.838343,
        -2.570492, 0.395772, 0.383881, -0.102183, 0.792021, -1.115609, 0.087739, 1.315760, 0.126290,
        -0.110647, -0.728409, -0.167993, 0.219225, -0.779348, -0.454169, -0.494373, -0.042941, 0.590961,
        0.150981, 0.823538, -0.205221, 0.579278, -0.091470, -0.888975, -1.162158, -1.696795, 1.738887,
        -1.512767, -1.288845, -1.325552, 0.291177, 0.810289, 0.057579, 1.635312, 0.074678, 0.202850, 0.203498,
        -0.457931, -0.079897, 0.786562, -0.801416, -0.180796, 0.218522, 0.173021, -0.109604, -1.220208,
        0.709270, -0.208061, 3.359230, -1.603736, 1.448541, 1.123481, 0.975310, -0.602830, -0.353502,
        -0.069794, -0.562130, -0.255457, -0.801451, -0.786005, 1.155458, -2.428786, 0.447593, 0.483063,
        2.391463, -1.042556, -0.958032, 1.477344, 0.389212, -1.068240, 0.764718, -0.441594, 0.783578,
        -1.010605, 0.620979, 2.011170, -0.718195, -0.408105, -2.084801, 2.369901, 0.134276, 0.908548,
        -1.092857, 1.108507, -1.483137, -0.872198, -0.297147, 3.563967, -1.300817, 1.523171, -0.812135,
        0.215938, -0.584987, -0.859223, 2.665388, 0.352199, 1.396974, 1.806923, 0.470439, -0.902979, 0.778323,
        -0.924703, -0.079573, 2.132593, 1.800376, -0.376244, -0.916174, -1.072258, 1.294247, 0.121515,
        0.975360, 0.545494, 0.426074, -0.534295, 1.987598, -0.947500, 1.576598, 0.235397, 0.961423, 0.428385,
        -0.957107, 0.720728, 0.006992, -0.462210, 0.063922, 0.121580, -0.321857, -0.888177, -0.489179,
        1.253906, -1.638375, -0.013020, 0.211527, 0.319203, -0.402550, -1.060673, -0.374348, 0.161652,
        -1.277303, 0.944640, -0.147110, -1.237748, -1.000301, 0.411228, 1.018534, 0.199705, -0.256623,
        -0.584001, -0.627994, -0.940399, -0.122609, 1.110878, 0.053313, -0.454496, -0.459188, 0.613280,
        0.428708, 1.611587, 1.513715, -0.552344, 0.628760, -0.677982, -0.060924, 0.222803, -0.316789,
        -0.410981, 0.520555, 1.558723, 0.404387, 0.984643},
       0.994198638429, 0.0540004708878},
  };
  return refs;
}
