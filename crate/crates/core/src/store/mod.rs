//! Embedded transactional store.
//!
//! On-disk layout of the store directory:
//!
//! * `schema_version` - decimal schema version, newline terminated
//! * `log.jsonl` - append-only commit log, one JSON record per committed transaction
//! * `snapshot.json` - periodic full snapshot; log records at or below its
//!   sequence number are skipped on replay
//!
//! Every mutation goes through a single writer (`transact`), so the commit
//! order is a total order and each transaction observes the state left by
//! the previous one. Readers see the last committed state and never block
//! on a transaction that is still being planned.

mod migrations;

pub use migrations::{parse_script, Directive, Migration, BUILTIN as BUILTIN_MIGRATIONS};

use crate::clock::now_ms;
use crate::domain::{
    constant_time_eq, AlertNotification, Deployment, DeploymentId, DeploymentStatus, Platform,
    ResourceId, ResourceRecord, ResourceState,
};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

const LOG_FILE: &str = "log.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";
const VERSION_FILE: &str = "schema_version";
const DEFAULT_SNAPSHOT_EVERY: usize = 4096;
const MAX_ALERTS: usize = 20_000;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("store corrupt: {0}")]
    Corrupt(String),
    #[error("migration to version {version} failed: {cause}")]
    MigrationFailed { version: u32, cause: String },
    #[error("resources not available: {0:?}")]
    ResourceConflict(Vec<ResourceId>),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("reservation must name at least one resource")]
    EmptyReservation,
    #[error("table {0} does not exist at the current schema version")]
    MissingTable(&'static str),
    #[error("invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaVersion {
    pub version: u32,
    pub applied_at_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reservation {
    pub deployment_id: DeploymentId,
    pub resource_ids: BTreeSet<ResourceId>,
    pub committed_at_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserRecord {
    pub name: String,
    pub salt: String,
    pub password_hash: String,
}

impl UserRecord {
    pub fn new(name: impl Into<String>, password: &str) -> Self {
        let mut salt = [0u8; 16];
        rand::rng().fill_bytes(&mut salt);
        let salt = B64.encode(salt);
        let password_hash = hash_password(&salt, password);
        UserRecord { name: name.into(), salt, password_hash }
    }

    pub fn verify(&self, password: &str) -> bool {
        constant_time_eq(hash_password(&self.salt, password).as_bytes(), self.password_hash.as_bytes())
    }
}

fn hash_password(salt: &str, password: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(password.as_bytes());
    B64.encode(h.finalize())
}

pub type Credentials = BTreeMap<Platform, String>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
enum Mutation {
    CreateTable { name: String },
    DropTable { name: String },
    SetVersion { version: u32, applied_at_ms: i64 },
    PutUser { user: UserRecord },
    PutCredentials { id: String, credentials: Credentials },
    PutResource { resource: ResourceRecord },
    PutDeployment { deployment: Box<Deployment> },
    PutReservation { reservation: Reservation },
    DeleteReservation { deployment_id: DeploymentId },
    AppendAlert { alert: AlertNotification },
}

#[derive(Debug, Serialize, Deserialize)]
struct LogRecord {
    seq: u64,
    mutations: Vec<Mutation>,
}

/// Full committed state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tables {
    pub seq: u64,
    pub schema_version: u32,
    pub applied: Vec<SchemaVersion>,
    pub tables: BTreeSet<String>,
    pub users: BTreeMap<String, UserRecord>,
    pub credentials: BTreeMap<String, Credentials>,
    pub resources: BTreeMap<ResourceId, ResourceRecord>,
    pub deployments: BTreeMap<DeploymentId, Deployment>,
    pub reservations: BTreeMap<DeploymentId, Reservation>,
    pub alerts: VecDeque<AlertNotification>,
}

impl Tables {
    fn apply(&mut self, m: Mutation) {
        match m {
            Mutation::CreateTable { name } => {
                self.tables.insert(name);
            }
            Mutation::DropTable { name } => {
                self.tables.remove(&name);
            }
            Mutation::SetVersion { version, applied_at_ms } => {
                self.schema_version = version;
                self.applied.push(SchemaVersion { version, applied_at_ms });
            }
            Mutation::PutUser { user } => {
                self.users.insert(user.name.clone(), user);
            }
            Mutation::PutCredentials { id, credentials } => {
                self.credentials.insert(id, credentials);
            }
            Mutation::PutResource { resource } => {
                self.resources.insert(resource.id.clone(), resource);
            }
            Mutation::PutDeployment { deployment } => {
                self.deployments.insert(deployment.id.clone(), *deployment);
            }
            Mutation::PutReservation { reservation } => {
                self.reservations.insert(reservation.deployment_id.clone(), reservation);
            }
            Mutation::DeleteReservation { deployment_id } => {
                self.reservations.remove(&deployment_id);
            }
            Mutation::AppendAlert { alert } => {
                self.alerts.push_back(alert);
                while self.alerts.len() > MAX_ALERTS {
                    self.alerts.pop_front();
                }
            }
        }
    }

    fn has_table(&self, name: &str) -> bool {
        self.tables.contains(name)
    }
}

/// A transaction under construction. Reads see the committed state plus this
/// transaction's own writes; nothing is visible to others until commit.
pub struct Tx<'a> {
    base: &'a Tables,
    now_ms: i64,
    mutations: Vec<Mutation>,
    resources: BTreeMap<ResourceId, ResourceRecord>,
    deployments: BTreeMap<DeploymentId, Deployment>,
    reservations: BTreeMap<DeploymentId, Option<Reservation>>,
}

impl<'a> Tx<'a> {
    fn new(base: &'a Tables) -> Self {
        Tx {
            base,
            now_ms: now_ms(),
            mutations: Vec::new(),
            resources: BTreeMap::new(),
            deployments: BTreeMap::new(),
            reservations: BTreeMap::new(),
        }
    }

    pub fn now_ms(&self) -> i64 {
        self.now_ms
    }

    fn require(&self, table: &'static str) -> Result<(), StoreError> {
        if self.base.has_table(table) {
            Ok(())
        } else {
            Err(StoreError::MissingTable(table))
        }
    }

    pub fn resource(&self, id: &ResourceId) -> Option<&ResourceRecord> {
        self.resources.get(id).or_else(|| self.base.resources.get(id))
    }

    pub fn deployment(&self, id: &DeploymentId) -> Option<&Deployment> {
        self.deployments.get(id).or_else(|| self.base.deployments.get(id))
    }

    /// Every resource as this transaction sees it.
    pub fn resources(&self) -> impl Iterator<Item = &ResourceRecord> {
        let staged_only = self.resources.values().filter(|r| !self.base.resources.contains_key(&r.id));
        self.base.resources.values().map(|r| self.resources.get(&r.id).unwrap_or(r)).chain(staged_only)
    }

    pub fn reservation(&self, id: &DeploymentId) -> Option<&Reservation> {
        match self.reservations.get(id) {
            Some(staged) => staged.as_ref(),
            None => self.base.reservations.get(id),
        }
    }

    pub fn put_resource(&mut self, resource: ResourceRecord) -> Result<(), StoreError> {
        self.require("resources")?;
        resource.validate().map_err(StoreError::Invalid)?;
        self.resources.insert(resource.id.clone(), resource.clone());
        self.mutations.push(Mutation::PutResource { resource });
        Ok(())
    }

    pub fn put_deployment(&mut self, deployment: Deployment) -> Result<(), StoreError> {
        self.require("deployments")?;
        self.deployments.insert(deployment.id.clone(), deployment.clone());
        self.mutations.push(Mutation::PutDeployment { deployment: Box::new(deployment) });
        Ok(())
    }

    fn put_reservation(&mut self, reservation: Reservation) {
        self.reservations.insert(reservation.deployment_id.clone(), Some(reservation.clone()));
        self.mutations.push(Mutation::PutReservation { reservation });
    }

    fn delete_reservation(&mut self, deployment_id: &DeploymentId) {
        self.reservations.insert(deployment_id.clone(), None);
        self.mutations.push(Mutation::DeleteReservation { deployment_id: deployment_id.clone() });
    }

    /// Flips every listed resource AVAILABLE -> RESERVED for `deployment_id`,
    /// or fails without changing anything.
    pub fn reserve(
        &mut self,
        deployment_id: &DeploymentId,
        resource_ids: &BTreeSet<ResourceId>,
    ) -> Result<Reservation, StoreError> {
        self.require("reservations")?;
        self.require("resources")?;
        if resource_ids.is_empty() {
            return Err(StoreError::EmptyReservation);
        }
        let mut conflicts = Vec::new();
        for id in resource_ids {
            match self.resource(id) {
                None => return Err(StoreError::NotFound(format!("resource {id}"))),
                Some(r) if r.state != ResourceState::Available => conflicts.push(id.clone()),
                Some(_) => {}
            }
        }
        if !conflicts.is_empty() {
            return Err(StoreError::ResourceConflict(conflicts));
        }
        for id in resource_ids {
            let mut r = self.resource(id).cloned().expect("checked above");
            r.state = ResourceState::Reserved;
            r.deployment_id = Some(deployment_id.clone());
            self.put_resource(r)?;
        }
        let reservation = match self.reservation(deployment_id) {
            Some(existing) => {
                let mut r = existing.clone();
                r.resource_ids.extend(resource_ids.iter().cloned());
                r
            }
            None => Reservation {
                deployment_id: deployment_id.clone(),
                resource_ids: resource_ids.clone(),
                committed_at_ms: self.now_ms,
            },
        };
        self.put_reservation(reservation.clone());
        Ok(reservation)
    }

    /// Returns every resource held by `deployment_id` to AVAILABLE.
    pub fn release(&mut self, deployment_id: &DeploymentId) -> Result<usize, StoreError> {
        self.require("reservations")?;
        if self.deployment(deployment_id).is_none() {
            return Err(StoreError::NotFound(format!("deployment {deployment_id}")));
        }
        let Some(reservation) = self.reservation(deployment_id).cloned() else {
            return Ok(0);
        };
        let mut released = 0;
        for id in &reservation.resource_ids {
            if self.free_resource(deployment_id, id)? {
                released += 1;
            }
        }
        self.delete_reservation(deployment_id);
        Ok(released)
    }

    /// Releases one resource of a reservation, keeping the rest.
    pub fn release_one(
        &mut self,
        deployment_id: &DeploymentId,
        resource_id: &ResourceId,
    ) -> Result<bool, StoreError> {
        let Some(mut reservation) = self.reservation(deployment_id).cloned() else {
            return Ok(false);
        };
        if !reservation.resource_ids.remove(resource_id) {
            return Ok(false);
        }
        let freed = self.free_resource(deployment_id, resource_id)?;
        if reservation.resource_ids.is_empty() {
            self.delete_reservation(deployment_id);
        } else {
            self.put_reservation(reservation);
        }
        Ok(freed)
    }

    fn free_resource(&mut self, deployment_id: &DeploymentId, id: &ResourceId) -> Result<bool, StoreError> {
        match self.resource(id) {
            Some(r) if r.deployment_id.as_ref() == Some(deployment_id) => {
                let mut r = r.clone();
                r.state = ResourceState::Available;
                r.deployment_id = None;
                self.put_resource(r)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// RESERVED -> DEPLOYED for a resource held by `deployment_id`.
    pub fn mark_deployed(&mut self, deployment_id: &DeploymentId, id: &ResourceId) -> Result<(), StoreError> {
        let r = self
            .resource(id)
            .ok_or_else(|| StoreError::NotFound(format!("resource {id}")))?;
        if r.deployment_id.as_ref() != Some(deployment_id) {
            return Err(StoreError::Invalid(format!("resource {id} not held by {deployment_id}")));
        }
        if r.state == ResourceState::Reserved {
            let mut r = r.clone();
            r.state = ResourceState::Deployed;
            self.put_resource(r)?;
        }
        Ok(())
    }

    pub fn put_user(&mut self, user: UserRecord) -> Result<(), StoreError> {
        self.require("users")?;
        self.mutations.push(Mutation::PutUser { user });
        Ok(())
    }

    pub fn put_credentials(&mut self, id: String, credentials: Credentials) -> Result<(), StoreError> {
        self.require("credentials")?;
        self.mutations.push(Mutation::PutCredentials { id, credentials });
        Ok(())
    }

    pub fn append_alert(&mut self, alert: AlertNotification) -> Result<(), StoreError> {
        self.require("alerts")?;
        self.mutations.push(Mutation::AppendAlert { alert });
        Ok(())
    }
}

struct Writer {
    log: File,
    since_snapshot: usize,
    snapshot_every: usize,
}

pub struct Store {
    dir: PathBuf,
    migrations: Vec<Migration>,
    writer: Mutex<Writer>,
    tables: RwLock<Tables>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish()
    }
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, BUILTIN_MIGRATIONS.to_vec())
    }

    pub fn open_with(dir: impl AsRef<Path>, migrations: Vec<Migration>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;

        let mut tables = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => serde_json::from_slice::<Tables>(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Tables::default(),
            Err(e) => return Err(e.into()),
        };

        let log_path = dir.join(LOG_FILE);
        let replayed = replay_log(&log_path, &mut tables)?;
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;

        let on_disk = read_version_file(&dir)?;
        if on_disk > tables.schema_version {
            return Err(StoreError::Corrupt(format!(
                "schema_version file says {on_disk} but log ends at {}",
                tables.schema_version
            )));
        }
        if on_disk != tables.schema_version || !dir.join(VERSION_FILE).exists() {
            write_version_file(&dir, tables.schema_version)?;
        }

        Ok(Store {
            dir,
            migrations,
            writer: Mutex::new(Writer { log, since_snapshot: replayed, snapshot_every: DEFAULT_SNAPSHOT_EVERY }),
            tables: RwLock::new(tables),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_snapshot_every(&self, commits: usize) {
        self.writer.lock().snapshot_every = commits.max(1);
    }

    pub fn schema_version(&self) -> u32 {
        self.tables.read().schema_version
    }

    pub fn latest_version(&self) -> u32 {
        self.migrations.iter().map(|m| m.version).max().unwrap_or(0)
    }

    /// Applies migrations up to `target`, one commit per version. Returns the
    /// versions applied by this call.
    pub fn migrate(&self, target: u32) -> Result<Vec<u32>, StoreError> {
        let mut writer = self.writer.lock();
        let current = self.tables.read().schema_version;
        if target < current {
            return Err(StoreError::MigrationFailed {
                version: target,
                cause: format!("downgrade from {current} unsupported"),
            });
        }
        let mut applied = Vec::new();
        for version in current + 1..=target {
            let fail = |cause: String| StoreError::MigrationFailed { version, cause };
            let migration = self
                .migrations
                .iter()
                .find(|m| m.version == version)
                .ok_or_else(|| fail("no migration script".into()))?;
            let directives = parse_script(migration.script).map_err(fail)?;

            let mut mutations = Vec::new();
            {
                let tables = self.tables.read();
                let mut present = tables.tables.clone();
                for d in directives {
                    match d {
                        Directive::CreateTable(name) => {
                            if !present.insert(name.clone()) {
                                return Err(fail(format!("table {name} already exists")));
                            }
                            mutations.push(Mutation::CreateTable { name });
                        }
                        Directive::DropTable(name) => {
                            if !present.remove(&name) {
                                return Err(fail(format!("table {name} does not exist")));
                            }
                            mutations.push(Mutation::DropTable { name });
                        }
                    }
                }
            }
            mutations.push(Mutation::SetVersion { version, applied_at_ms: now_ms() });
            self.commit(&mut writer, mutations)?;
            write_version_file(&self.dir, version)?;
            tracing::info!(version, name = migration.name, "applied migration");
            applied.push(version);
        }
        Ok(applied)
    }

    /// Runs `f` as one serializable transaction. Commits when `f` returns `Ok`.
    pub fn transact<T, E>(&self, f: impl FnOnce(&mut Tx<'_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let mut writer = self.writer.lock();
        let (out, mutations) = {
            let tables = self.tables.read();
            let mut tx = Tx::new(&tables);
            let out = f(&mut tx)?;
            (out, tx.mutations)
        };
        if !mutations.is_empty() {
            self.commit(&mut writer, mutations)?;
        }
        Ok(out)
    }

    fn commit(&self, writer: &mut Writer, mutations: Vec<Mutation>) -> Result<(), StoreError> {
        let seq = self.tables.read().seq + 1;
        let record = LogRecord { seq, mutations };
        let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        writer.log.write_all(&line)?;

        {
            let mut tables = self.tables.write();
            for m in record.mutations {
                tables.apply(m);
            }
            tables.seq = seq;
        }

        writer.since_snapshot += 1;
        if writer.since_snapshot >= writer.snapshot_every {
            self.write_snapshot(writer)?;
        }
        Ok(())
    }

    fn write_snapshot(&self, writer: &mut Writer) -> Result<(), StoreError> {
        let bytes = {
            let tables = self.tables.read();
            serde_json::to_vec(&*tables).map_err(|e| StoreError::Corrupt(e.to_string()))?
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        writer.log.set_len(0)?;
        writer.since_snapshot = 0;
        Ok(())
    }

    /// Forces a snapshot and log truncation.
    pub fn checkpoint(&self) -> Result<(), StoreError> {
        let mut writer = self.writer.lock();
        self.write_snapshot(&mut writer)
    }

    /// Consistent copy of the committed state.
    pub fn tables(&self) -> Tables {
        self.tables.read().clone()
    }

    pub fn read<T>(&self, f: impl FnOnce(&Tables) -> T) -> T {
        f(&self.tables.read())
    }

    // Convenience operations, each its own transaction.

    pub fn reserve_resources(
        &self,
        deployment_id: &DeploymentId,
        resource_ids: &BTreeSet<ResourceId>,
    ) -> Result<Reservation, StoreError> {
        self.transact(|tx| {
            if tx.deployment(deployment_id).is_none() {
                return Err(StoreError::NotFound(format!("deployment {deployment_id}")));
            }
            tx.reserve(deployment_id, resource_ids)
        })
    }

    pub fn release_resources(&self, deployment_id: &DeploymentId) -> Result<usize, StoreError> {
        self.transact(|tx| tx.release(deployment_id))
    }

    pub fn put_resource(&self, resource: ResourceRecord) -> Result<(), StoreError> {
        self.transact(|tx| tx.put_resource(resource))
    }

    pub fn get_resource(&self, id: &ResourceId) -> Result<ResourceRecord, StoreError> {
        self.read(|t| t.resources.get(id).cloned())
            .ok_or_else(|| StoreError::NotFound(format!("resource {id}")))
    }

    pub fn list_resources(&self) -> Vec<ResourceRecord> {
        self.read(|t| t.resources.values().cloned().collect())
    }

    pub fn put_deployment(&self, deployment: Deployment) -> Result<(), StoreError> {
        self.transact(|tx| tx.put_deployment(deployment))
    }

    pub fn get_deployment(&self, id: &DeploymentId) -> Result<Deployment, StoreError> {
        self.read(|t| t.deployments.get(id).cloned())
            .ok_or_else(|| StoreError::NotFound(format!("deployment {id}")))
    }

    pub fn list_deployments(&self) -> Vec<Deployment> {
        self.read(|t| t.deployments.values().cloned().collect())
    }

    /// Deployments with alerting enabled in READY or STOPPED.
    pub fn list_deployments_with_alerting(&self) -> Vec<Deployment> {
        self.read(|t| {
            t.deployments
                .values()
                .filter(|d| {
                    d.alerting.enabled
                        && matches!(d.status, DeploymentStatus::Ready | DeploymentStatus::Stopped)
                })
                .cloned()
                .collect()
        })
    }

    pub fn put_user(&self, user: UserRecord) -> Result<(), StoreError> {
        self.transact(|tx| tx.put_user(user))
    }

    pub fn get_user(&self, name: &str) -> Option<UserRecord> {
        self.read(|t| t.users.get(name).cloned())
    }

    pub fn put_credentials(&self, id: impl Into<String>, credentials: Credentials) -> Result<(), StoreError> {
        self.transact(|tx| tx.put_credentials(id.into(), credentials))
    }

    pub fn get_credentials(&self, id: &str) -> Option<Credentials> {
        self.read(|t| t.credentials.get(id).cloned())
    }

    pub fn append_alert(&self, alert: AlertNotification) -> Result<(), StoreError> {
        self.transact(|tx| tx.append_alert(alert))
    }

    pub fn alerts_since(&self, from_ms: i64) -> Vec<AlertNotification> {
        self.read(|t| t.alerts.iter().filter(|a| a.timestamp_ms >= from_ms).cloned().collect())
    }
}

/// Replays complete log records into `tables`. A torn or unparsable tail is
/// truncated away. Returns the number of records applied.
fn replay_log(path: &Path, tables: &mut Tables) -> Result<usize, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    let mut offset = 0usize;
    let mut applied = 0;
    while offset < bytes.len() {
        let Some(end) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break;
        };
        let line = &bytes[offset..offset + end];
        let Ok(record) = serde_json::from_slice::<LogRecord>(line) else {
            break;
        };
        if record.seq > tables.seq {
            if record.seq != tables.seq + 1 {
                return Err(StoreError::Corrupt(format!(
                    "log gap: expected seq {} found {}",
                    tables.seq + 1,
                    record.seq
                )));
            }
            for m in record.mutations {
                tables.apply(m);
            }
            tables.seq = record.seq;
            applied += 1;
        }
        offset += end + 1;
    }
    if offset < bytes.len() {
        tracing::warn!(dropped = bytes.len() - offset, "truncating torn log tail");
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(offset as u64)?;
    }
    Ok(applied)
}

fn read_version_file(dir: &Path) -> Result<u32, StoreError> {
    match fs::read_to_string(dir.join(VERSION_FILE)) {
        Ok(s) => s
            .trim_end_matches('\n')
            .parse()
            .map_err(|_| StoreError::Corrupt(format!("bad schema_version file: {s:?}"))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(e.into()),
    }
}

fn write_version_file(dir: &Path, version: u32) -> Result<(), StoreError> {
    let tmp = dir.join(format!("{VERSION_FILE}.tmp"));
    fs::write(&tmp, format!("{version}\n"))?;
    fs::rename(tmp, dir.join(VERSION_FILE))?;
    Ok(())
}
