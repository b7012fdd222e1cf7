//! Bundled AAL-style name table for the 116 human labels.
//!
//! Label numbering follows the table used by the exploration tool this
//! engine targets: it agrees with the classic AAL order up to label 34,
//! places Hippocampus at 35/36 (classic 37/38) and shifts the following
//! cerebral labels down by two, with the posterior cingulate pair moved to
//! 89/90. Labels 91–116 are the cerebellar hemispheres and vermis.
//!
//! 24 labels are flagged non-functional: the 18 cerebellar hemisphere labels
//! and the six caudal vermis labels, leaving 92 functional regions.

/// (label, name, functional)
pub type AalEntry = (u32, &'static str, bool);

const CLASSIC_PREFIX: [&str; 34] = [
    "Precentral_L",
    "Precentral_R",
    "Frontal_Sup_L",
    "Frontal_Sup_R",
    "Frontal_Sup_Orb_L",
    "Frontal_Sup_Orb_R",
    "Frontal_Mid_L",
    "Frontal_Mid_R",
    "Frontal_Mid_Orb_L",
    "Frontal_Mid_Orb_R",
    "Frontal_Inf_Oper_L",
    "Frontal_Inf_Oper_R",
    "Frontal_Inf_Tri_L",
    "Frontal_Inf_Tri_R",
    "Frontal_Inf_Orb_L",
    "Frontal_Inf_Orb_R",
    "Rolandic_Oper_L",
    "Rolandic_Oper_R",
    "Supp_Motor_Area_L",
    "Supp_Motor_Area_R",
    "Olfactory_L",
    "Olfactory_R",
    "Frontal_Sup_Medial_L",
    "Frontal_Sup_Medial_R",
    "Frontal_Med_Orb_L",
    "Frontal_Med_Orb_R",
    "Rectus_L",
    "Rectus_R",
    "Insula_L",
    "Insula_R",
    "Cingulum_Ant_L",
    "Cingulum_Ant_R",
    "Cingulum_Mid_L",
    "Cingulum_Mid_R",
];

const CEREBRAL_REST: [&str; 56] = [
    "Hippocampus_L",
    "Hippocampus_R",
    "ParaHippocampal_L",
    "ParaHippocampal_R",
    "Amygdala_L",
    "Amygdala_R",
    "Calcarine_L",
    "Calcarine_R",
    "Cuneus_L",
    "Cuneus_R",
    "Lingual_L",
    "Lingual_R",
    "Occipital_Sup_L",
    "Occipital_Sup_R",
    "Occipital_Mid_L",
    "Occipital_Mid_R",
    "Occipital_Inf_L",
    "Occipital_Inf_R",
    "Fusiform_L",
    "Fusiform_R",
    "Postcentral_L",
    "Postcentral_R",
    "Parietal_Sup_L",
    "Parietal_Sup_R",
    "Parietal_Inf_L",
    "Parietal_Inf_R",
    "SupraMarginal_L",
    "SupraMarginal_R",
    "Angular_L",
    "Angular_R",
    "Precuneus_L",
    "Precuneus_R",
    "Paracentral_Lobule_L",
    "Paracentral_Lobule_R",
    "Caudate_L",
    "Caudate_R",
    "Putamen_L",
    "Putamen_R",
    "Pallidum_L",
    "Pallidum_R",
    "Thalamus_L",
    "Thalamus_R",
    "Heschl_L",
    "Heschl_R",
    "Temporal_Sup_L",
    "Temporal_Sup_R",
    "Temporal_Pole_Sup_L",
    "Temporal_Pole_Sup_R",
    "Temporal_Mid_L",
    "Temporal_Mid_R",
    "Temporal_Pole_Mid_L",
    "Temporal_Pole_Mid_R",
    "Temporal_Inf_L",
    "Temporal_Inf_R",
    "Cingulum_Post_L",
    "Cingulum_Post_R",
];

const CEREBELLAR: [&str; 26] = [
    "Cerebelum_Crus1_L",
    "Cerebelum_Crus1_R",
    "Cerebelum_Crus2_L",
    "Cerebelum_Crus2_R",
    "Cerebelum_3_L",
    "Cerebelum_3_R",
    "Cerebelum_4_5_L",
    "Cerebelum_4_5_R",
    "Cerebelum_6_L",
    "Cerebelum_6_R",
    "Cerebelum_7b_L",
    "Cerebelum_7b_R",
    "Cerebelum_8_L",
    "Cerebelum_8_R",
    "Cerebelum_9_L",
    "Cerebelum_9_R",
    "Cerebelum_10_L",
    "Cerebelum_10_R",
    "Vermis_1_2",
    "Vermis_3",
    "Vermis_4_5",
    "Vermis_6",
    "Vermis_7",
    "Vermis_8",
    "Vermis_9",
    "Vermis_10",
];

pub const N_LABELS: usize = 116;

/// Default-mode-network labels.
pub const DMN_LABELS: [u32; 14] = [23, 24, 35, 36, 39, 40, 59, 60, 65, 66, 75, 76, 81, 82];

/// The full table in label order.
pub fn table() -> Vec<AalEntry> {
    let mut out = Vec::with_capacity(N_LABELS);
    let names = CLASSIC_PREFIX.iter().chain(CEREBRAL_REST.iter());
    for (i, name) in names.enumerate() {
        out.push((i as u32 + 1, *name, true));
    }
    for (i, name) in CEREBELLAR.iter().enumerate() {
        let functional = name.starts_with("Vermis_1_2") || name.starts_with("Vermis_3");
        out.push((91 + i as u32, *name, functional));
    }
    out
}

/// Labels 1–90 plus the two anterior vermis lobules.
pub fn is_functional(label: u32) -> bool {
    (1..=90).contains(&label) || matches!(name(label), Some("Vermis_1_2" | "Vermis_3"))
}

pub fn name(label: u32) -> Option<&'static str> {
    let idx = label.checked_sub(1)? as usize;
    match idx {
        0..=33 => Some(CLASSIC_PREFIX[idx]),
        34..=89 => Some(CEREBRAL_REST[idx - 34]),
        90..=115 => Some(CEREBELLAR[idx - 90]),
        _ => None,
    }
}
